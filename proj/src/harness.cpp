#include "dmpes/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

namespace dmpes {

Eigen::Index ExperimentConfig::dimension() const {
  if (model) return model->dimension();
  if (conditional) return conditional->dimension();
  throw ConfigError("experiment has no model");
}

void ExperimentConfig::check() const {
  const bool has_plain = model.has_value();
  const bool has_cond = conditional.has_value();
  if (has_plain == has_cond)
    throw ConfigError(
        "experiment requires exactly one of a plain or a conditional model");
  if (has_plain)
    require_valid(*model);
  else
    require_valid(*conditional);

  if (replications < 2)
    throw ConfigError("replications must be at least 2");
  if (sizes.treated < 1 || sizes.control < 1)
    throw ConfigError("group sizes must be positive");
  if (sizes.matched_treated < 1 || sizes.matched_control < 1)
    throw ConfigError("matched sizes must be positive");
  if (sizes.matched_treated > sizes.treated)
    throw ConfigError("matched treated size exceeds the treated group");
  if (sizes.matched_control > sizes.control)
    throw ConfigError("matched control size exceeds the control group");

  if (methods.empty())
    throw ConfigError("at least one matching method is required");
  for (const MatchSpec& m : methods) {
    if (m.method == MatchMethod::kRandomSubsample)
      throw ConfigError(
          "the random baseline is always included; do not list it as a "
          "method");
    if (m.method == MatchMethod::kConditional && !has_cond)
      throw ConfigError("conditional matching requires a conditional model");
    if (m.metric_source == MetricSource::kOracle && !has_plain)
      throw ConfigError("the oracle metric requires a plain model");
    if (m.method == MatchMethod::kCoordinate &&
        (m.coordinate < 0 || m.coordinate >= dimension()))
      throw ConfigError("coordinate index out of range");
  }

  if (directions.random_count < 1)
    throw ConfigError("at least one random probe direction is required");
  if (directions.orthogonal_count < 0)
    throw ConfigError("orthogonal direction count cannot be negative");
  if (invariance.panels < 1 || invariance.maps < 1)
    throw ConfigError("invariance panels and maps must be positive");
  if (invariance.treated < 2 || invariance.control < 2)
    throw ConfigError("invariance panel sizes must be at least 2");

  if (tolerance.se_multiplier <= 0.0)
    throw ConfigError("the tolerance multiplier must be positive");
  if (tolerance.bootstrap_resamples < 2)
    throw ConfigError("bootstrap resamples must be at least 2");
  if (tolerance.exact_tol <= 0.0)
    throw ConfigError("the exact tolerance must be positive");
  if (tolerance.max_exclusion_fraction < 0.0 ||
      tolerance.max_exclusion_fraction > 1.0)
    throw ConfigError("the exclusion fraction must lie in [0, 1]");

  if (allocation.kind == AllocationRule::Kind::kFixed) {
    const int count = has_plain ? static_cast<int>(model->components().size())
                                : conditional->component_count();
    if (static_cast<int>(allocation.fixed_counts.size()) != count)
      throw ConfigError("fixed allocation needs one count per component");
    auto group_of = [&](int k) {
      return has_plain ? model->components()[k].group
                       : conditional->component(k).group;
    };
    long treated_sum = 0;
    long control_sum = 0;
    for (int k = 0; k < count; ++k) {
      if (allocation.fixed_counts[k] < 0)
        throw ConfigError("fixed allocation counts cannot be negative");
      (group_of(k) == Group::kTreated ? treated_sum : control_sum) +=
          allocation.fixed_counts[k];
    }
    if (treated_sum != sizes.treated || control_sum != sizes.control)
      throw ConfigError(
          "fixed allocation counts must sum to the group sizes");
  }
}

const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::kPass: return "pass";
    case Verdict::kFail: return "fail";
    case Verdict::kDegenerate: return "degenerate";
  }
  return "unknown";
}

Suite parse_suite(const std::string& name) {
  if (name == "all") return Suite::kAll;
  if (name == "invariance") return Suite::kInvariance;
  if (name == "thm31") return Suite::kMeanStructure;
  if (name == "epbr") return Suite::kEpbr;
  if (name == "variance") return Suite::kVariance;
  if (name == "conditional") return Suite::kConditional;
  throw ConfigError("unknown suite '" + name +
                    "'; expected one of all, invariance, thm31, epbr, "
                    "variance, conditional");
}

const char* suite_name(Suite s) {
  switch (s) {
    case Suite::kAll: return "all";
    case Suite::kInvariance: return "invariance";
    case Suite::kMeanStructure: return "thm31";
    case Suite::kEpbr: return "epbr";
    case Suite::kVariance: return "variance";
    case Suite::kConditional: return "conditional";
  }
  return "unknown";
}

const std::vector<std::string>& claim_registry() {
  static const std::vector<std::string> registry = {
      "invariance-mahalanobis-greedy",
      "invariance-mahalanobis-optimal",
      "invariance-discriminant-caliper",
      "invariance-negative-control",
      "conditional-invariance-remainder",
      "conditional-invariance-negative-control",
      "matched-mean-coordinates-equal",
      "matched-gap-covariance-exchangeable",
      "matched-dispersion-exchangeable",
      "component-structure-exchangeable",
      "degenerate-structure-flat",
      "orthogonal-statistic-constancy",
      "epbr-uniform",
      "epbr-sign-safety",
      "epbr-zero-discriminant",
      "epbr-zero-gap",
      "variance-ratio-identity",
      "orthogonal-ratio-constancy",
      "component-dispersion-identity",
      "pooled-dispersion-deviation",
      "script-projection-identities",
      "subspace-statistic-constancy",
      "subspace-epbr-uniform",
      "subspace-variance-ratio-identity",
      "subspace-component-dispersion-identity",
      "block-structure-fit",
      "block-degenerate-flat",
  };
  return registry;
}

bool VerificationReport::all_pass() const {
  for (const Claim& c : claims)
    if (c.verdict == Verdict::kFail) return false;
  return true;
}

const Claim* VerificationReport::find(const std::string& id) const {
  for (const Claim& c : claims)
    if (c.id == id) return &c;
  return nullptr;
}

namespace {

int resolve_workers(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("DMPES_WORKERS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  if (hc == 0) return 2;
  return static_cast<int>(std::min(hc, 8u));
}

std::string numbered_id(const char* prefix, int index) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%s-%02d", prefix, index + 1);
  return std::string(buf);
}

/// Effective per-design match specs plus the canonical model the panels are
/// drawn from. Matched sizes default to the config sizes; conditional specs
/// address the canonical special columns, which come first.
struct Prepared {
  std::optional<Model> plain;
  std::optional<ConditionalModel> cond;
  std::vector<MatchSpec> specs;
  std::vector<std::string> names;
  std::optional<Metric> oracle;
};

Prepared prepare(const ExperimentConfig& config) {
  Prepared out;
  if (config.model) {
    out.plain = canonicalize(*config.model).second;
  } else {
    out.cond = conditional_canonicalize(*config.conditional).second;
  }
  const Eigen::Index special_dim = out.cond ? out.cond->special_dim() : 0;

  bool wants_oracle = false;
  for (const MatchSpec& raw : config.methods) {
    MatchSpec spec = raw;
    if (spec.matched_treated < 0)
      spec.matched_treated = config.sizes.matched_treated;
    if (spec.matched_control < 0)
      spec.matched_control = config.sizes.matched_control;
    if (spec.method == MatchMethod::kConditional) {
      spec.special_columns.clear();
      for (Eigen::Index j = 0; j < special_dim; ++j)
        spec.special_columns.push_back(static_cast<int>(j));
    }
    if (spec.metric_source == MetricSource::kOracle) wants_oracle = true;
    out.specs.push_back(spec);

    std::string base = match_method_name(spec.method);
    std::string name = base;
    int suffix = 2;
    while (std::find(out.names.begin(), out.names.end(), name) !=
           out.names.end())
      name = base + "-" + std::to_string(suffix++);
    out.names.push_back(name);
  }
  if (wants_oracle) out.oracle = oracle_metric(*out.plain);
  out.names.push_back("random");
  return out;
}

ReplicationRecord replicate(const ExperimentConfig& config,
                            const Prepared& prep, int rep) {
  ReplicationRecord rec;
  try {
    const Sample panel =
        prep.plain
            ? draw_panel(*prep.plain, config.sizes.treated,
                         config.sizes.control, config.allocation, config.seed,
                         static_cast<std::uint64_t>(rep))
            : draw_conditional_panel(*prep.cond, config.sizes.treated,
                                     config.sizes.control, config.allocation,
                                     config.seed,
                                     static_cast<std::uint64_t>(rep));
    rec.designs.reserve(prep.specs.size() + 1);
    for (const MatchSpec& spec : prep.specs) {
      const std::optional<Metric>& metric =
          spec.metric_source == MetricSource::kOracle
              ? prep.oracle
              : std::optional<Metric>();
      rec.designs.push_back(matched_moments(panel, run_matcher(panel, spec,
                                                               metric)));
    }
    Stream sub = Stream::keyed(
        config.seed, {stream_tag::kSubsample, static_cast<std::uint64_t>(rep)});
    const MatchResult baseline =
        config.allocation.kind == AllocationRule::Kind::kFixed
            ? stratified_subsample(panel, config.sizes.matched_treated,
                                   config.sizes.matched_control, sub)
            : random_subsample(panel, config.sizes.matched_treated,
                               config.sizes.matched_control, sub);
    rec.designs.push_back(matched_moments(panel, baseline));
  } catch (const FeasibilityError& e) {
    rec.designs.clear();
    rec.excluded = true;
    rec.note = e.what();
  } catch (const ConditioningError& e) {
    rec.designs.clear();
    rec.excluded = true;
    rec.note = e.what();
  }
  return rec;
}

void build_directions(const ExperimentConfig& config, ReplicationStats& stats) {
  Stream stream = Stream::keyed(config.seed, {stream_tag::kDirections});
  const Eigen::Index p = stats.dim;
  const Eigen::Index s = stats.special_dim;

  auto push = [&stats](std::string id, Direction d) {
    stats.direction_ids.push_back(std::move(id));
    stats.directions.push_back(std::move(d));
  };

  if (s == 0) {
    push("z", stats.degenerate_z ? Direction::zero(p)
                                 : Direction::unit(Vector::Ones(p)));
    for (int i = 0; i < config.directions.random_count; ++i)
      push(numbered_id("rand", i), Direction::unit(stream.unit_vector(p)));
    const Vector diag = Vector::Ones(p) / std::sqrt(double(p));
    for (int i = 0; i < config.directions.orthogonal_count; ++i) {
      if (stats.degenerate_z || p < 2) {
        push(numbered_id("orth", i), Direction::unit(stream.unit_vector(p)));
        continue;
      }
      Vector w;
      do {
        const Vector v = stream.unit_vector(p);
        w = v - diag * diag.dot(v);
      } while (w.norm() < 1e-8);
      push(numbered_id("orth", i), Direction::unit(w));
    }
    return;
  }

  const Eigen::Index r = p - s;
  for (int i = 0; i < config.directions.random_count; ++i)
    push(numbered_id("rand", i), Direction::unit(stream.unit_vector(p)));
  if (r < 2) return;
  const Vector diag_r = Vector::Ones(r) / std::sqrt(double(r));
  for (int i = 0; i < config.directions.orthogonal_count; ++i) {
    Vector w_r;
    if (stats.degenerate_z) {
      w_r = stream.unit_vector(r);
    } else {
      do {
        const Vector v = stream.unit_vector(r);
        w_r = v - diag_r * diag_r.dot(v);
      } while (w_r.norm() < 1e-8);
    }
    Vector full = Vector::Zero(p);
    full.tail(r) = w_r;
    push(numbered_id("sub-orth", i), Direction::unit(full));
  }
}

}  // namespace

ReplicationStats run_experiment(const ExperimentConfig& config, int workers) {
  config.check();
  const Prepared prep = prepare(config);

  ReplicationStats stats;
  stats.config = config;
  stats.design_names = prep.names;
  stats.dim = config.dimension();

  if (config.model) {
    const CanonicalMap map = canonicalize(*config.model).first;
    stats.special_dim = 0;
    stats.sigma2 = map.sigma2;
    stats.delta = map.delta;
    stats.degenerate_z = map.degenerate;
    stats.treated_components = config.model->group_indices(Group::kTreated);
    stats.control_components = config.model->group_indices(Group::kControl);
  } else {
    const CanonicalMap map = conditional_canonicalize(*config.conditional).first;
    stats.special_dim = config.conditional->special_dim();
    stats.sigma2 = map.sigma2;
    stats.delta = map.delta;
    stats.degenerate_z = map.degenerate;
    for (int k = 0; k < config.conditional->component_count(); ++k) {
      if (config.conditional->component(k).group == Group::kTreated)
        stats.treated_components.push_back(k);
      else
        stats.control_components.push_back(k);
    }
  }
  build_directions(config, stats);

  const int total = config.replications;
  stats.rows.resize(total);

  int pool_size = std::min(resolve_workers(workers), total);
  pool_size = std::max(pool_size, 1);

  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&]() {
    while (true) {
      const int rep = next.fetch_add(1);
      if (rep >= total) return;
      try {
        stats.rows[rep] = replicate(config, prep, rep);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  if (pool_size == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(pool_size);
    for (int t = 0; t < pool_size; ++t) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  stats.excluded = 0;
  for (const ReplicationRecord& row : stats.rows)
    if (row.excluded) ++stats.excluded;
  const double limit = config.tolerance.max_exclusion_fraction * total;
  if (stats.excluded > limit)
    throw FeasibilityError(
        "excluded " + std::to_string(stats.excluded) + " of " +
        std::to_string(total) +
        " replications, more than the configured fraction allows");
  return stats;
}

}  // namespace dmpes
