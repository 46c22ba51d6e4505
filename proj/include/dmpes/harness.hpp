#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dmpes/conditional.hpp"
#include "dmpes/decompose.hpp"

namespace dmpes {

struct SizeConfig {
  int treated = 100;
  int control = 300;
  int matched_treated = 100;
  int matched_control = 100;
};

struct DirectionConfig {
  int random_count = 20;
  int orthogonal_count = 12;
};

struct TolerancePolicy {
  double se_multiplier = 3.0;
  int bootstrap_resamples = 200;
  double exact_tol = 1e-10;
  double max_exclusion_fraction = 0.01;
};

struct InvarianceConfig {
  int panels = 10;
  int maps = 25;
  int treated = 50;
  int control = 150;
};

/// One replication experiment: a model, panel sizes, matchers to run, probe
/// directions, and tolerances. Exactly one of `model` / `conditional` is
/// set. The first entry of `methods` is the design the claims analyze.
struct ExperimentConfig {
  std::string name = "experiment";
  std::optional<Model> model;
  std::optional<ConditionalModel> conditional;
  SizeConfig sizes;
  AllocationRule allocation;
  std::vector<MatchSpec> methods;
  DirectionConfig directions;
  InvarianceConfig invariance;
  int replications = 2000;
  std::uint64_t seed = 7;
  TolerancePolicy tolerance;

  bool is_conditional() const { return conditional.has_value(); }
  Eigen::Index dimension() const;
  /// Throws ConfigError when sizes, methods, or the model are inconsistent.
  void check() const;
};

/// Per-replication canonical-coordinate moments for every design (the
/// configured matchers in order, then the random baseline).
struct ReplicationRecord {
  std::vector<MomentSummary> designs;
  bool excluded = false;
  std::string note;
};

/// Everything needed to evaluate or re-render claims: the config echo, the
/// canonical geometry, the probe directions, and per-replication moments.
struct ReplicationStats {
  ExperimentConfig config;
  std::vector<std::string> design_names;
  std::vector<ReplicationRecord> rows;
  int excluded = 0;

  Eigen::Index dim = 0;
  Eigen::Index special_dim = 0;  // zero for plain models
  Vector sigma2;
  Vector delta;
  bool degenerate_z = false;
  std::vector<int> treated_components;
  std::vector<int> control_components;

  std::vector<std::string> direction_ids;
  std::vector<Direction> directions;
};

/// Runs all replications. Deterministic for a fixed config and seed
/// regardless of `workers`; workers <= 0 resolves from the DMPES_WORKERS
/// environment variable, falling back to a small default.
ReplicationStats run_experiment(const ExperimentConfig& config,
                                int workers = 0);

enum class Verdict { kPass, kFail, kDegenerate };
const char* verdict_name(Verdict v);

struct Claim {
  std::string id;
  double estimate = 0.0;
  double reference = 0.0;
  double se = 0.0;
  Verdict verdict = Verdict::kDegenerate;
  std::string notes;
};

/// Per-direction diagnostic row; component is -1 on direction-level rows
/// and a component index on rows carrying the per-component ratios.
struct DirectionRow {
  std::string direction_id;
  int component = -1;
  double rho = 0.0;
  double pbr = 0.0;
  double pbr_se = 0.0;
  double pbr_discriminant = 0.0;
  double pbr_discriminant_se = 0.0;
  double ratio_observed = 0.0;
  double ratio_predicted = 0.0;
  double ratio_se = 0.0;
  double dispersion_observed = 0.0;
  double dispersion_predicted = 0.0;
  double dispersion_se = 0.0;
};

/// Fitted structure parameters for one matrix statistic: scale k and
/// coupling coefficient c of the best k(I + c 1 1') approximation, with the
/// relative residual of the fit.
struct FitRow {
  std::string target;
  double scale = 0.0;
  double coefficient = 0.0;
  double residual = 0.0;
};

struct VerificationReport {
  std::string config_name;
  std::uint64_t seed = 0;
  std::string suite;
  int replications = 0;
  int excluded = 0;
  std::vector<Claim> claims;
  std::vector<DirectionRow> direction_rows;
  std::vector<FitRow> fits;

  bool all_pass() const;
  const Claim* find(const std::string& id) const;
};

enum class Suite { kAll, kInvariance, kMeanStructure, kEpbr, kVariance,
                   kConditional };
Suite parse_suite(const std::string& name);
const char* suite_name(Suite s);

/// The fixed claim registry; every id appears in every report exactly once.
const std::vector<std::string>& claim_registry();

/// Evaluates every registry claim against the stored replication stats.
/// Claims outside the selected suite, or not applicable to the config,
/// carry the degenerate verdict with an explanatory note.
VerificationReport verify(const ReplicationStats& stats, Suite suite);

/// Affine-invariance claims for one method: fresh panels from the config's
/// model, `n_maps` random invertible maps each (condition number <= 1e4),
/// exact matched-set comparison. The negative controls assert that a
/// constructed map changes the result.
std::vector<Claim> verify_affine_invariance(const ExperimentConfig& config,
                                            MatchMethod method, int n_maps);

/// Section builders appending to an existing report.
void verify_mean_structure(const ReplicationStats& stats,
                           VerificationReport& report);
void verify_epbr(const ReplicationStats& stats, VerificationReport& report);
void verify_variance_decompositions(const ReplicationStats& stats,
                                    VerificationReport& report);
void verify_conditional(const ReplicationStats& stats,
                        VerificationReport& report);

}  // namespace dmpes
