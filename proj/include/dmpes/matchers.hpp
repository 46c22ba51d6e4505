#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dmpes/sampler.hpp"

namespace dmpes {

enum class MatchMethod {
  kMahalanobisGreedy,
  kMahalanobisOptimal,
  kDiscriminantCaliper,
  kConditional,
  kRandomSubsample,
  kCoordinate,
};

const char* match_method_name(MatchMethod m);
MatchMethod parse_match_method(const std::string& name);

enum class MetricSource { kEstimated, kOracle };

/// Matching metric estimated from a panel or taken from a model: pooled
/// within-group covariance, the discriminant direction it induces, and the
/// pooled standard deviation of the discriminant score.
struct Metric {
  Matrix pooled_covariance;
  Direction discriminant;
  double score_scale = 0.0;
};

/// Pooled within-group covariance with a one-shot ridge repair when the
/// factorization fails or the matrix is numerically singular.
Matrix pooled_within_covariance(const Sample& sample);

/// Metric estimated from the panel itself: pooled covariance and the
/// direction proportional to its inverse applied to the mean gap, oriented
/// so treated scores are at least as high on average.
Metric estimate_metric(const Sample& sample);

/// Metric taken from population quantities of a valid model.
Metric oracle_metric(const Model& model);

struct MatchSpec {
  MatchMethod method = MatchMethod::kMahalanobisGreedy;
  /// Number of treated units to keep; -1 keeps all. When fewer than the
  /// panel size, the highest-scoring treated units are kept.
  int matched_treated = -1;
  /// Number of matched controls; -1 mirrors matched_treated. Pair matchers
  /// require equality with matched_treated.
  int matched_control = -1;
  /// Caliper half-width in pooled score standard deviations.
  double caliper_width = 0.25;
  /// When true, treated units with no control inside the caliper make the
  /// match infeasible instead of falling back to the nearest score.
  bool strict_caliper = false;
  /// Covariate columns matched exactly by the conditional method.
  std::vector<int> special_columns;
  /// When true, treated units in a stratum with no remaining control are
  /// matched across strata instead of making the match infeasible.
  bool stratum_backfill = false;
  /// Column used by the coordinate matcher.
  int coordinate = 0;
  /// Whether callers should estimate the metric from the panel or take it
  /// from the model population.
  MetricSource metric_source = MetricSource::kEstimated;
};

/// Matched index sets. Pair matchers fill treated_rows and control_rows as
/// parallel arrays with per-pair distances; the random subsample fills the
/// two sets independently and leaves pair_distances empty.
struct MatchResult {
  std::vector<int> treated_rows;
  std::vector<int> control_rows;
  std::vector<double> pair_distances;
  /// Treated rows whose caliper sheet was empty and were matched by score
  /// fallback (empty under strict calipers, which throw instead).
  std::vector<int> fallback_treated;
  double total_distance() const;
};

MatchResult mahalanobis_greedy_match(const Sample& sample,
                                     const MatchSpec& spec,
                                     const Metric& metric);
MatchResult mahalanobis_greedy_match(const Sample& sample,
                                     const MatchSpec& spec);

/// Exact minimum of the total pooled-Mahalanobis pair distance over all
/// assignments of the kept treated units to distinct controls.
MatchResult mahalanobis_optimal_match(const Sample& sample,
                                      const MatchSpec& spec,
                                      const Metric& metric);
MatchResult mahalanobis_optimal_match(const Sample& sample,
                                      const MatchSpec& spec);

/// Greedy pooled-Mahalanobis matching restricted to controls whose
/// discriminant score lies within the caliper; treated rows with an empty
/// caliper sheet are backfilled by the nearest-score control unless the
/// caliper is strict.
MatchResult discriminant_caliper_match(const Sample& sample,
                                       const MatchSpec& spec,
                                       const Metric& metric);
MatchResult discriminant_caliper_match(const Sample& sample,
                                       const MatchSpec& spec);

/// Exact matching on the special columns combined with greedy
/// pooled-Mahalanobis matching on the regression-residualized remainder
/// within each stratum of special values.
MatchResult conditional_match(const Sample& sample, const MatchSpec& spec);

/// Simple random subsamples of each group, drawn without replacement.
MatchResult random_subsample(const Sample& sample, int n_treated,
                             int n_control, Stream& stream);

/// Random subsamples drawn within component strata so each component keeps
/// its share of the group; every share must come out integral.
MatchResult stratified_subsample(const Sample& sample, int n_treated,
                                 int n_control, Stream& stream);

/// Greedy nearest-neighbor matching on one raw covariate column. Not
/// affinely invariant; serves as a negative control.
MatchResult coordinate_match(const Sample& sample, const MatchSpec& spec);

MatchResult run_matcher(const Sample& sample, const MatchSpec& spec,
                        const std::optional<Metric>& metric = std::nullopt);

namespace detail {
/// Minimum-cost assignment of rows to distinct columns for a dense cost
/// matrix with rows <= cols. Returns the chosen column per row; among
/// minimum-cost assignments the lexicographically smallest column vector is
/// returned.
std::vector<int> solve_assignment(const Matrix& cost);
}  // namespace detail

}  // namespace dmpes
