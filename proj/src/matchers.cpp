#include "dmpes/matchers.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "dmpes/conditional.hpp"

namespace dmpes {

namespace {

constexpr double kRidgeFactor = 1e-10;

/// Cholesky factor with a single ridge repair; `s` is updated in place when
/// the ridge is applied.
Matrix repaired_factor(Matrix& s) {
  require_square(s, "pooled covariance");
  for (int attempt = 0; attempt < 2; ++attempt) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
    double lo = es.eigenvalues().minCoeff();
    double hi = es.eigenvalues().maxCoeff();
    if (lo > 0.0 && hi / lo <= kConditionLimit) {
      Eigen::LLT<Matrix> llt(s);
      if (llt.info() == Eigen::Success) return llt.matrixL();
    }
    if (attempt == 0) {
      s += (kRidgeFactor * s.trace() / static_cast<double>(s.rows())) *
           Matrix::Identity(s.rows(), s.cols());
    }
  }
  throw ConditioningError(
      "pooled covariance is numerically singular even after ridge repair");
}

Matrix whiten_rows(const Matrix& rows, const Matrix& factor) {
  return factor.triangularView<Eigen::Lower>()
      .solve(rows.transpose())
      .transpose();
}

Metric metric_from_moments(Matrix pooled, const Vector& gap) {
  Metric metric;
  Matrix L = repaired_factor(pooled);
  metric.pooled_covariance = pooled;
  Vector half = L.triangularView<Eigen::Lower>().solve(gap);
  if (half.norm() < kDegenerateSpread) {
    metric.discriminant = Direction::zero(gap.size());
    metric.score_scale = 0.0;
    return metric;
  }
  Vector raw =
      L.transpose().triangularView<Eigen::Upper>().solve(half);
  metric.discriminant = Direction::unit(raw);
  const Vector& beta = metric.discriminant.coefficients();
  metric.score_scale = std::sqrt(beta.dot(pooled * beta));
  return metric;
}

struct PairSizes {
  int matched_treated;
  int matched_control;
};

PairSizes resolve_pair_sizes(const MatchSpec& spec, int n_treated,
                             int n_control) {
  int mt = spec.matched_treated < 0 ? n_treated : spec.matched_treated;
  int mc = spec.matched_control < 0 ? mt : spec.matched_control;
  if (mt < 1) throw ConfigError("matched treated count must be positive");
  if (mc != mt) {
    throw ConfigError(
        "pair matching requires equal matched treated and control counts");
  }
  if (mt > n_treated) {
    throw FeasibilityError("requested " + std::to_string(mt) +
                           " matched treated but the panel has " +
                           std::to_string(n_treated));
  }
  if (mt > n_control) {
    throw FeasibilityError("requested " + std::to_string(mt) +
                           " matched pairs but the panel has only " +
                           std::to_string(n_control) + " controls");
  }
  return {mt, mc};
}

/// Treated indices in decreasing score order (ties toward the lower index),
/// truncated to `keep`.
std::vector<int> ordered_by_score(const Vector& scores, int keep) {
  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  idx.resize(keep);
  return idx;
}

void sort_pairs(MatchResult& result) {
  std::vector<int> order(result.treated_rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return result.treated_rows[a] < result.treated_rows[b];
  });
  MatchResult sorted;
  sorted.fallback_treated = result.fallback_treated;
  for (int i : order) {
    sorted.treated_rows.push_back(result.treated_rows[i]);
    sorted.control_rows.push_back(result.control_rows[i]);
    sorted.pair_distances.push_back(result.pair_distances[i]);
  }
  std::sort(sorted.fallback_treated.begin(), sorted.fallback_treated.end());
  result = std::move(sorted);
}

std::string join_rows(const std::vector<int>& rows) {
  std::ostringstream os;
  for (size_t i = 0; i < rows.size(); ++i) {
    if (i) os << ", ";
    os << rows[i];
  }
  return os.str();
}

Metric resolve_metric(const Sample& sample,
                      const std::optional<Metric>& metric) {
  if (metric) {
    if (metric->pooled_covariance.rows() != sample.dim()) {
      throw DimensionError("metric dimension does not match the panel");
    }
    return *metric;
  }
  return estimate_metric(sample);
}

}  // namespace

const char* match_method_name(MatchMethod m) {
  switch (m) {
    case MatchMethod::kMahalanobisGreedy: return "mahalanobis-greedy";
    case MatchMethod::kMahalanobisOptimal: return "mahalanobis-optimal";
    case MatchMethod::kDiscriminantCaliper: return "discriminant-caliper";
    case MatchMethod::kConditional: return "conditional";
    case MatchMethod::kRandomSubsample: return "random";
    case MatchMethod::kCoordinate: return "coordinate";
  }
  return "unknown";
}

MatchMethod parse_match_method(const std::string& name) {
  if (name == "greedy" || name == "mahalanobis-greedy") {
    return MatchMethod::kMahalanobisGreedy;
  }
  if (name == "optimal" || name == "mahalanobis-optimal") {
    return MatchMethod::kMahalanobisOptimal;
  }
  if (name == "caliper" || name == "discriminant-caliper") {
    return MatchMethod::kDiscriminantCaliper;
  }
  if (name == "conditional") return MatchMethod::kConditional;
  if (name == "random") return MatchMethod::kRandomSubsample;
  if (name == "coordinate") return MatchMethod::kCoordinate;
  throw ConfigError("unknown matching method '" + name + "'");
}

double MatchResult::total_distance() const {
  double sum = 0.0;
  for (double d : pair_distances) sum += d;
  return sum;
}

Matrix pooled_within_covariance(const Sample& sample) {
  const int nt = sample.n_treated();
  const int nc = sample.n_control();
  if (nt + nc < 3) {
    throw ConfigError("pooled covariance needs at least three units");
  }
  Matrix scatter = Matrix::Zero(sample.dim(), sample.dim());
  for (const Matrix* rows : {&sample.treated, &sample.control}) {
    Vector mean = rows->colwise().mean();
    Matrix centered = rows->rowwise() - mean.transpose();
    scatter += centered.transpose() * centered;
  }
  return scatter / static_cast<double>(nt + nc - 2);
}

Metric estimate_metric(const Sample& sample) {
  if (sample.n_treated() + sample.n_control() <= sample.dim() + 2) {
    throw ConfigError("metric estimation needs more than p + 2 units");
  }
  Matrix pooled = pooled_within_covariance(sample);
  Vector gap = sample.treated.colwise().mean().transpose() -
               sample.control.colwise().mean().transpose();
  return metric_from_moments(std::move(pooled), gap);
}

Metric oracle_metric(const Model& model) {
  require_valid(model);
  auto [mean_t, cov_t] = population_group_moments(model, Group::kTreated);
  auto [mean_c, cov_c] = population_group_moments(model, Group::kControl);
  double wt = 0.0, wc = 0.0;
  for (const Component& c : model.components()) {
    (c.group == Group::kTreated ? wt : wc) += c.weight;
  }
  double total = wt + wc;
  Matrix pooled = (wt / total) * cov_t + (wc / total) * cov_c;
  return metric_from_moments(std::move(pooled), mean_t - mean_c);
}

MatchResult mahalanobis_greedy_match(const Sample& sample,
                                     const MatchSpec& spec,
                                     const Metric& metric) {
  PairSizes sizes = resolve_pair_sizes(spec, sample.n_treated(),
                                       sample.n_control());
  Vector scores_t = metric.discriminant.is_zero()
                        ? Vector::Zero(sample.n_treated())
                        : Vector(sample.treated *
                                 metric.discriminant.coefficients());
  std::vector<int> kept = ordered_by_score(scores_t, sizes.matched_treated);

  Matrix pooled = metric.pooled_covariance;
  Matrix L = repaired_factor(pooled);
  Matrix tw = whiten_rows(sample.treated, L);
  Matrix cw = whiten_rows(sample.control, L);

  std::vector<bool> used(sample.n_control(), false);
  MatchResult result;
  for (int t : kept) {
    int best = -1;
    double best_d = 0.0;
    for (int c = 0; c < sample.n_control(); ++c) {
      if (used[c]) continue;
      double d = (tw.row(t) - cw.row(c)).norm();
      if (best < 0 || d < best_d) {
        best = c;
        best_d = d;
      }
    }
    used[best] = true;
    result.treated_rows.push_back(t);
    result.control_rows.push_back(best);
    result.pair_distances.push_back(best_d);
  }
  sort_pairs(result);
  return result;
}

MatchResult mahalanobis_greedy_match(const Sample& sample,
                                     const MatchSpec& spec) {
  return mahalanobis_greedy_match(sample, spec, estimate_metric(sample));
}

MatchResult mahalanobis_optimal_match(const Sample& sample,
                                      const MatchSpec& spec,
                                      const Metric& metric) {
  PairSizes sizes = resolve_pair_sizes(spec, sample.n_treated(),
                                       sample.n_control());
  Vector scores_t = metric.discriminant.is_zero()
                        ? Vector::Zero(sample.n_treated())
                        : Vector(sample.treated *
                                 metric.discriminant.coefficients());
  std::vector<int> kept = ordered_by_score(scores_t, sizes.matched_treated);

  Matrix pooled = metric.pooled_covariance;
  Matrix L = repaired_factor(pooled);
  Matrix tw = whiten_rows(sample.treated, L);
  Matrix cw = whiten_rows(sample.control, L);

  Matrix cost(kept.size(), sample.n_control());
  for (size_t i = 0; i < kept.size(); ++i) {
    for (int c = 0; c < sample.n_control(); ++c) {
      cost(i, c) = (tw.row(kept[i]) - cw.row(c)).norm();
    }
  }
  std::vector<int> assigned = detail::solve_assignment(cost);
  MatchResult result;
  for (size_t i = 0; i < kept.size(); ++i) {
    result.treated_rows.push_back(kept[i]);
    result.control_rows.push_back(assigned[i]);
    result.pair_distances.push_back(cost(i, assigned[i]));
  }
  sort_pairs(result);
  return result;
}

MatchResult mahalanobis_optimal_match(const Sample& sample,
                                      const MatchSpec& spec) {
  return mahalanobis_optimal_match(sample, spec, estimate_metric(sample));
}

MatchResult discriminant_caliper_match(const Sample& sample,
                                       const MatchSpec& spec,
                                       const Metric& metric) {
  if (!(spec.caliper_width >= 0.0)) {
    throw ConfigError("caliper width must be nonnegative");
  }
  PairSizes sizes = resolve_pair_sizes(spec, sample.n_treated(),
                                       sample.n_control());
  Vector scores_t(sample.n_treated());
  Vector scores_c(sample.n_control());
  if (metric.discriminant.is_zero()) {
    scores_t.setZero();
    scores_c.setZero();
  } else {
    scores_t = sample.treated * metric.discriminant.coefficients();
    scores_c = sample.control * metric.discriminant.coefficients();
  }
  std::vector<int> kept = ordered_by_score(scores_t, sizes.matched_treated);
  const double width = spec.caliper_width * metric.score_scale;

  Matrix pooled = metric.pooled_covariance;
  Matrix L = repaired_factor(pooled);
  Matrix tw = whiten_rows(sample.treated, L);
  Matrix cw = whiten_rows(sample.control, L);

  std::vector<bool> used(sample.n_control(), false);
  std::vector<int> infeasible;
  MatchResult result;
  for (int t : kept) {
    int best = -1;
    double best_d = 0.0;
    for (int c = 0; c < sample.n_control(); ++c) {
      if (used[c]) continue;
      if (std::abs(scores_t[t] - scores_c[c]) > width) continue;
      double d = (tw.row(t) - cw.row(c)).norm();
      if (best < 0 || d < best_d) {
        best = c;
        best_d = d;
      }
    }
    if (best < 0) {
      if (spec.strict_caliper) {
        infeasible.push_back(t);
        continue;
      }
      double best_gap = 0.0;
      for (int c = 0; c < sample.n_control(); ++c) {
        if (used[c]) continue;
        double gap = std::abs(scores_t[t] - scores_c[c]);
        if (best < 0 || gap < best_gap) {
          best = c;
          best_gap = gap;
        }
      }
      best_d = (tw.row(t) - cw.row(best)).norm();
      result.fallback_treated.push_back(t);
    }
    used[best] = true;
    result.treated_rows.push_back(t);
    result.control_rows.push_back(best);
    result.pair_distances.push_back(best_d);
  }
  if (!infeasible.empty()) {
    std::sort(infeasible.begin(), infeasible.end());
    throw FeasibilityError(
        "strict caliper leaves treated rows unmatched: " +
        join_rows(infeasible));
  }
  sort_pairs(result);
  return result;
}

MatchResult discriminant_caliper_match(const Sample& sample,
                                       const MatchSpec& spec) {
  return discriminant_caliper_match(sample, spec, estimate_metric(sample));
}

MatchResult conditional_match(const Sample& sample, const MatchSpec& spec) {
  const Eigen::Index p = sample.dim();
  if (spec.special_columns.empty()) {
    throw ConfigError("conditional matching needs special columns");
  }
  std::vector<int> cols = spec.special_columns;
  std::sort(cols.begin(), cols.end());
  if (std::adjacent_find(cols.begin(), cols.end()) != cols.end()) {
    throw ConfigError("special columns must be distinct");
  }
  if (cols.front() < 0 || cols.back() >= p) {
    throw ConfigError("special column out of range");
  }
  PairSizes sizes = resolve_pair_sizes(spec, sample.n_treated(),
                                       sample.n_control());

  auto [res, slope] = residualize_remainder(sample, cols);
  (void)slope;
  std::vector<int> remainder;
  for (int j = 0; j < p; ++j) {
    if (!std::binary_search(cols.begin(), cols.end(), j)) {
      remainder.push_back(j);
    }
  }
  const Eigen::Index r = static_cast<Eigen::Index>(remainder.size());
  Matrix rt(sample.n_treated(), r), rc(sample.n_control(), r);
  for (Eigen::Index j = 0; j < r; ++j) {
    rt.col(j) = res.treated.col(remainder[j]);
    rc.col(j) = res.control.col(remainder[j]);
  }

  Vector scores_t = Vector::Zero(sample.n_treated());
  Matrix tw(sample.n_treated(), r), cw(sample.n_control(), r);
  if (r > 0) {
    Sample residual_panel;
    residual_panel.treated = rt;
    residual_panel.control = rc;
    Metric metric = estimate_metric(residual_panel);
    if (!metric.discriminant.is_zero()) {
      scores_t = rt * metric.discriminant.coefficients();
    }
    Matrix pooled = metric.pooled_covariance;
    Matrix L = repaired_factor(pooled);
    tw = whiten_rows(rt, L);
    cw = whiten_rows(rc, L);
  }
  std::vector<int> kept = ordered_by_score(scores_t, sizes.matched_treated);

  std::map<std::vector<double>, std::vector<int>> control_strata;
  for (int c = 0; c < sample.n_control(); ++c) {
    std::vector<double> key(cols.size());
    for (size_t j = 0; j < cols.size(); ++j) {
      key[j] = sample.control(c, cols[j]);
    }
    control_strata[key].push_back(c);
  }

  std::vector<bool> used(sample.n_control(), false);
  std::vector<int> orphans;
  MatchResult result;
  for (int t : kept) {
    std::vector<double> key(cols.size());
    for (size_t j = 0; j < cols.size(); ++j) {
      key[j] = sample.treated(t, cols[j]);
    }
    auto it = control_strata.find(key);
    int best = -1;
    double best_d = 0.0;
    if (it != control_strata.end()) {
      for (int c : it->second) {
        if (used[c]) continue;
        double d = r > 0 ? (tw.row(t) - cw.row(c)).norm() : 0.0;
        if (best < 0 || d < best_d) {
          best = c;
          best_d = d;
        }
      }
    }
    if (best < 0) {
      orphans.push_back(t);
      continue;
    }
    used[best] = true;
    result.treated_rows.push_back(t);
    result.control_rows.push_back(best);
    result.pair_distances.push_back(best_d);
  }
  if (!orphans.empty() && !spec.stratum_backfill) {
    std::sort(orphans.begin(), orphans.end());
    throw FeasibilityError(
        "no eligible control shares the special values of treated rows: " +
        join_rows(orphans));
  }
  for (int t : orphans) {
    int best = -1;
    double best_d = 0.0;
    for (int c = 0; c < sample.n_control(); ++c) {
      if (used[c]) continue;
      double d = r > 0 ? (tw.row(t) - cw.row(c)).norm() : 0.0;
      if (best < 0 || d < best_d) {
        best = c;
        best_d = d;
      }
    }
    used[best] = true;
    result.treated_rows.push_back(t);
    result.control_rows.push_back(best);
    result.pair_distances.push_back(best_d);
    result.fallback_treated.push_back(t);
  }
  sort_pairs(result);
  return result;
}

namespace {

std::vector<int> subsample_rows(int available, int wanted, Stream& stream) {
  if (wanted < 1 || wanted > available) {
    throw ConfigError("subsample size " + std::to_string(wanted) +
                      " is outside 1.." + std::to_string(available));
  }
  std::vector<int> perm = stream.permutation(available);
  perm.resize(wanted);
  std::sort(perm.begin(), perm.end());
  return perm;
}

std::vector<int> stratified_rows(const std::vector<int>& labels, int wanted,
                                 Stream& stream) {
  const int available = static_cast<int>(labels.size());
  if (wanted < 1 || wanted > available) {
    throw ConfigError("subsample size " + std::to_string(wanted) +
                      " is outside 1.." + std::to_string(available));
  }
  std::map<int, std::vector<int>> strata;
  for (int i = 0; i < available; ++i) strata[labels[i]].push_back(i);
  std::vector<int> out;
  for (auto& [label, rows] : strata) {
    long long share = static_cast<long long>(rows.size()) * wanted;
    if (share % available != 0) {
      throw ConfigError(
          "stratified subsample needs each component share to be integral");
    }
    int take = static_cast<int>(share / available);
    std::vector<int> local = stream.permutation(static_cast<int>(rows.size()));
    for (int i = 0; i < take; ++i) out.push_back(rows[local[i]]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

MatchResult random_subsample(const Sample& sample, int n_treated,
                             int n_control, Stream& stream) {
  MatchResult result;
  result.treated_rows = subsample_rows(sample.n_treated(), n_treated, stream);
  result.control_rows = subsample_rows(sample.n_control(), n_control, stream);
  return result;
}

MatchResult stratified_subsample(const Sample& sample, int n_treated,
                                 int n_control, Stream& stream) {
  MatchResult result;
  result.treated_rows =
      stratified_rows(sample.treated_component, n_treated, stream);
  result.control_rows =
      stratified_rows(sample.control_component, n_control, stream);
  return result;
}

MatchResult coordinate_match(const Sample& sample, const MatchSpec& spec) {
  if (spec.coordinate < 0 || spec.coordinate >= sample.dim()) {
    throw ConfigError("coordinate column out of range");
  }
  PairSizes sizes = resolve_pair_sizes(spec, sample.n_treated(),
                                       sample.n_control());
  Vector vt = sample.treated.col(spec.coordinate);
  Vector vc = sample.control.col(spec.coordinate);
  std::vector<int> kept = ordered_by_score(vt, sizes.matched_treated);

  std::vector<bool> used(sample.n_control(), false);
  MatchResult result;
  for (int t : kept) {
    int best = -1;
    double best_d = 0.0;
    for (int c = 0; c < sample.n_control(); ++c) {
      if (used[c]) continue;
      double d = std::abs(vt[t] - vc[c]);
      if (best < 0 || d < best_d) {
        best = c;
        best_d = d;
      }
    }
    used[best] = true;
    result.treated_rows.push_back(t);
    result.control_rows.push_back(best);
    result.pair_distances.push_back(best_d);
  }
  sort_pairs(result);
  return result;
}

MatchResult run_matcher(const Sample& sample, const MatchSpec& spec,
                        const std::optional<Metric>& metric) {
  switch (spec.method) {
    case MatchMethod::kMahalanobisGreedy:
      return mahalanobis_greedy_match(sample, spec,
                                      resolve_metric(sample, metric));
    case MatchMethod::kMahalanobisOptimal:
      return mahalanobis_optimal_match(sample, spec,
                                       resolve_metric(sample, metric));
    case MatchMethod::kDiscriminantCaliper:
      return discriminant_caliper_match(sample, spec,
                                        resolve_metric(sample, metric));
    case MatchMethod::kConditional:
      return conditional_match(sample, spec);
    case MatchMethod::kCoordinate:
      return coordinate_match(sample, spec);
    case MatchMethod::kRandomSubsample:
      throw ConfigError(
          "random subsampling draws from a stream; call random_subsample");
  }
  throw ConfigError("unhandled matching method");
}

}  // namespace dmpes
