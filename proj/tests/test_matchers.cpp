#include "dmpes/matchers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <utility>
#include <vector>

#include <doctest.h>

namespace {

using namespace dmpes;

Sample make_sample(Matrix treated, Matrix control) {
  Sample s;
  s.treated_component.assign(treated.rows(), 0);
  s.control_component.assign(control.rows(), 0);
  s.treated = std::move(treated);
  s.control = std::move(control);
  return s;
}

Sample line_sample(const std::vector<double>& treated,
                   const std::vector<double>& control) {
  Matrix t(treated.size(), 1), c(control.size(), 1);
  for (std::size_t i = 0; i < treated.size(); ++i) t(i, 0) = treated[i];
  for (std::size_t i = 0; i < control.size(); ++i) c(i, 0) = control[i];
  return make_sample(std::move(t), std::move(c));
}

Metric identity_metric(Eigen::Index p) {
  Metric m;
  m.pooled_covariance = Matrix::Identity(p, p);
  Vector e1 = Vector::Zero(p);
  e1[0] = 1.0;
  m.discriminant = Direction::unit(e1);
  m.score_scale = 1.0;
  return m;
}

Matrix random_rows(Stream& stream, int n, Eigen::Index p) {
  Matrix rows(n, p);
  for (int i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) rows(i, j) = stream.normal();
  return rows;
}

Matrix random_invertible(Stream& stream, Eigen::Index p) {
  for (;;) {
    Matrix a = random_rows(stream, p, p);
    if (std::abs(a.determinant()) > 0.1) return a;
  }
}

Matrix shifted(Matrix rows, double offset) {
  rows.array() += offset;
  return rows;
}

Sample mapped(const Sample& sample, const Matrix& a, const Vector& b) {
  Sample out = sample;
  out.treated = (sample.treated * a.transpose()).rowwise() + b.transpose();
  out.control = (sample.control * a.transpose()).rowwise() + b.transpose();
  return out;
}

std::set<std::pair<int, int>> pair_set(const MatchResult& r) {
  std::set<std::pair<int, int>> out;
  for (std::size_t i = 0; i < r.treated_rows.size(); ++i) {
    out.emplace(r.treated_rows[i], r.control_rows[i]);
  }
  return out;
}

std::set<int> selected_treated(const MatchResult& r) {
  return {r.treated_rows.begin(), r.treated_rows.end()};
}

std::set<int> selected_controls(const MatchResult& r) {
  return {r.control_rows.begin(), r.control_rows.end()};
}

void check_no_duplicates(const MatchResult& r) {
  CHECK(selected_treated(r).size() == r.treated_rows.size());
  CHECK(selected_controls(r).size() == r.control_rows.size());
}

/// Minimum total cost over all injective treated-to-control assignments,
/// scanning treated rows in index order.
double enumerate_minimum(const Matrix& cost, int row, std::vector<bool>& used,
                         double acc) {
  if (row == cost.rows()) return acc;
  double best = std::numeric_limits<double>::infinity();
  for (int c = 0; c < cost.cols(); ++c) {
    if (used[c]) continue;
    used[c] = true;
    best = std::min(best,
                    enumerate_minimum(cost, row + 1, used, acc + cost(row, c)));
    used[c] = false;
  }
  return best;
}

}  // namespace

TEST_SUITE("matchers") {

TEST_CASE("the pooled metric solves the mean gap") {
  Matrix t(4, 2), c(4, 2);
  t << 1.5, 0.0, -0.5, 0.0, 0.5, 1.0, 0.5, -1.0;
  c << 1.0, 0.0, -2.0, 0.0, -0.5, 1.0, -0.5, -1.0;
  const Sample sample = make_sample(t, c);
  const Metric metric = estimate_metric(sample);

  Vector e1(2);
  e1 << 1.0, 0.0;
  CHECK((metric.discriminant.coefficients() - e1).norm() < 1e-10);
  CHECK(metric.score_scale > 0.0);
}

TEST_CASE("identical group means give the zero direction") {
  Stream stream(4);
  Matrix rows = random_rows(stream, 6, 2);
  const Sample sample = make_sample(rows, rows);
  CHECK(estimate_metric(sample).discriminant.is_zero());
}

TEST_CASE("affine maps preserve the estimated score ranking") {
  Stream stream(17);
  const Sample sample =
      make_sample(random_rows(stream, 12, 3).rowwise() +
                      Eigen::RowVector3d(1.0, 0.5, 0.0),
                  random_rows(stream, 30, 3));
  const Matrix a = random_invertible(stream, 3);
  Vector b(3);
  b << 2.0, -1.0, 0.5;
  const Sample moved = mapped(sample, a, b);

  auto ranking = [](const Sample& s) {
    const Metric m = estimate_metric(s);
    const Vector scores = s.control * m.discriminant.coefficients();
    std::vector<int> order(scores.size());
    for (int i = 0; i < scores.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](int x, int y) { return scores[x] < scores[y]; });
    return order;
  };
  CHECK(ranking(sample) == ranking(moved));
}

TEST_CASE("greedy matching takes the nearest control") {
  const Sample sample = line_sample({0.0}, {1.0, 3.0});
  const MatchResult r =
      mahalanobis_greedy_match(sample, MatchSpec{}, identity_metric(1));
  REQUIRE(r.control_rows.size() == 1);
  CHECK(r.control_rows[0] == 0);
  CHECK(r.pair_distances[0] == doctest::Approx(1.0));
}

TEST_CASE("greedy matching processes hard cases first") {
  const Sample sample = line_sample({5.0, 6.0}, {5.5, 0.0});
  const MatchResult r =
      mahalanobis_greedy_match(sample, MatchSpec{}, identity_metric(1));
  REQUIRE(r.treated_rows.size() == 2);
  CHECK(r.treated_rows == std::vector<int>{0, 1});
  CHECK(r.control_rows == std::vector<int>{1, 0});
  CHECK(r.total_distance() == doctest::Approx(5.5));
}

TEST_CASE("optimal matching beats the other processing order") {
  const Sample sample = line_sample({5.0, 6.0}, {5.5, 0.0});
  const MatchResult r =
      mahalanobis_optimal_match(sample, MatchSpec{}, identity_metric(1));
  CHECK(r.control_rows == std::vector<int>{1, 0});
  CHECK(r.total_distance() == doctest::Approx(5.5));
  const double other_order = std::abs(5.0 - 5.5) + std::abs(6.0 - 0.0);
  CHECK(r.total_distance() < other_order);
}

TEST_CASE("a single pair is the only assignment") {
  const Sample sample = line_sample({2.0}, {7.0});
  const MatchResult r =
      mahalanobis_optimal_match(sample, MatchSpec{}, identity_metric(1));
  CHECK(r.treated_rows == std::vector<int>{0});
  CHECK(r.control_rows == std::vector<int>{0});
  CHECK(r.pair_distances[0] == doctest::Approx(5.0));
}

TEST_CASE("optimal matching reproduces the enumerated minimum") {
  Stream stream(404);
  for (int instance = 0; instance < 200; ++instance) {
    const int nt = 1 + static_cast<int>(stream.below(6));
    const int nc = nt + static_cast<int>(stream.below(9 - nt));
    const Eigen::Index p = 1 + static_cast<Eigen::Index>(stream.below(3));
    const Sample sample = make_sample(random_rows(stream, nt, p),
                                      random_rows(stream, nc, p));
    const Metric metric = identity_metric(p);

    Matrix cost(nt, nc);
    for (int i = 0; i < nt; ++i) {
      for (int j = 0; j < nc; ++j) {
        cost(i, j) = (sample.treated.row(i) - sample.control.row(j)).norm();
      }
    }
    std::vector<bool> used(nc, false);
    const double minimum = enumerate_minimum(cost, 0, used, 0.0);

    const MatchResult best =
        mahalanobis_optimal_match(sample, MatchSpec{}, metric);
    check_no_duplicates(best);
    double chosen = 0.0;
    for (std::size_t k = 0; k < best.treated_rows.size(); ++k) {
      chosen += cost(best.treated_rows[k], best.control_rows[k]);
    }
    CHECK(chosen == minimum);

    const MatchResult greedy =
        mahalanobis_greedy_match(sample, MatchSpec{}, metric);
    double greedy_cost = 0.0;
    for (std::size_t k = 0; k < greedy.treated_rows.size(); ++k) {
      greedy_cost += cost(greedy.treated_rows[k], greedy.control_rows[k]);
    }
    CHECK(chosen <= greedy_cost);
  }
}

TEST_CASE("an infinite caliper restricts nothing") {
  Stream stream(7);
  const Sample sample =
      make_sample(shifted(random_rows(stream, 10, 2), 0.4),
                  random_rows(stream, 30, 2));
  MatchSpec spec;
  spec.caliper_width = std::numeric_limits<double>::infinity();
  const MatchResult caliper = discriminant_caliper_match(sample, spec);
  const MatchResult greedy = mahalanobis_greedy_match(sample, MatchSpec{});
  CHECK(pair_set(caliper) == pair_set(greedy));
  CHECK(caliper.fallback_treated.empty());
}

TEST_CASE("calipers exclude controls with far scores") {
  Matrix t(1, 2), c(2, 2);
  t << 0.0, 0.0;
  c << 0.2, 3.0, 0.3, 0.0;
  const Sample sample = make_sample(t, c);
  MatchSpec spec;
  spec.caliper_width = 0.25;

  const MatchResult r =
      discriminant_caliper_match(sample, spec, identity_metric(2));
  REQUIRE(r.control_rows.size() == 1);
  CHECK(r.control_rows[0] == 0);
  CHECK(r.fallback_treated.empty());

  const MatchResult free_r = mahalanobis_greedy_match(
      sample, MatchSpec{}, identity_metric(2));
  CHECK(free_r.control_rows[0] == 1);
}

TEST_CASE("one dimensional calipers see only nearby scores") {
  const Sample sample = line_sample({0.0}, {0.1, 5.0});
  MatchSpec spec;
  spec.caliper_width = 0.25;
  const MatchResult r =
      discriminant_caliper_match(sample, spec, identity_metric(1));
  CHECK(r.control_rows == std::vector<int>{0});
  CHECK(r.fallback_treated.empty());
}

TEST_CASE("strict calipers refuse infeasible sheets") {
  const Sample sample = line_sample({0.0}, {5.0});
  MatchSpec spec;
  spec.caliper_width = 0.25;
  spec.strict_caliper = true;
  CHECK_THROWS_AS(
      discriminant_caliper_match(sample, spec, identity_metric(1)),
      FeasibilityError);

  spec.strict_caliper = false;
  const MatchResult r =
      discriminant_caliper_match(sample, spec, identity_metric(1));
  CHECK(r.fallback_treated == std::vector<int>{0});
  CHECK(r.control_rows == std::vector<int>{0});
}

TEST_CASE("constant specials reduce conditional matching to plain greedy") {
  Stream stream(23);
  Matrix t(8, 3), c(20, 3);
  t.col(0).setConstant(1.0);
  c.col(0).setConstant(1.0);
  t.rightCols(2) = shifted(random_rows(stream, 8, 2), 0.5);
  c.rightCols(2) = random_rows(stream, 20, 2);
  const Sample sample = make_sample(t, c);

  MatchSpec spec;
  spec.method = MatchMethod::kConditional;
  spec.special_columns = {0};
  const MatchResult conditional = conditional_match(sample, spec);

  const Sample remainder =
      make_sample(sample.treated.rightCols(2), sample.control.rightCols(2));
  const MatchResult greedy = mahalanobis_greedy_match(remainder, MatchSpec{});
  CHECK(pair_set(conditional) == pair_set(greedy));
}

TEST_CASE("remainder-only maps leave conditional matches alone") {
  Stream stream(29);
  Matrix t(10, 3), c(30, 3);
  for (int i = 0; i < 10; ++i) t(i, 0) = (i % 2) ? 2.0 : 0.0;
  for (int i = 0; i < 30; ++i) c(i, 0) = (i % 3 == 0) ? 2.0 : 0.0;
  t.rightCols(2) = shifted(random_rows(stream, 10, 2), 0.4);
  c.rightCols(2) = random_rows(stream, 30, 2);
  const Sample sample = make_sample(t, c);

  MatchSpec spec;
  spec.method = MatchMethod::kConditional;
  spec.special_columns = {0};
  const MatchResult base = conditional_match(sample, spec);
  check_no_duplicates(base);

  for (int trial = 0; trial < 5; ++trial) {
    Matrix a = Matrix::Identity(3, 3);
    a.bottomRightCorner(2, 2) = random_invertible(stream, 2);
    Vector b = Vector::Zero(3);
    b[1] = stream.normal();
    b[2] = stream.normal();
    const MatchResult moved = conditional_match(mapped(sample, a, b), spec);
    CHECK(pair_set(moved) == pair_set(base));
  }

}

TEST_CASE("maps crossing the special block can move conditional matches") {
  Matrix t(1, 2), c(3, 2);
  t << 0.0, 1.0;
  c << 0.0, 0.0, 1.0, 1.0, 1.0, 0.0;
  const Sample sample = make_sample(t, c);
  MatchSpec spec;
  spec.method = MatchMethod::kConditional;
  spec.special_columns = {0};

  const MatchResult base = conditional_match(sample, spec);
  Matrix swap(2, 2);
  swap << 0.0, 1.0, 1.0, 0.0;
  const MatchResult crossed =
      conditional_match(mapped(sample, swap, Vector::Zero(2)), spec);
  CHECK(pair_set(crossed) != pair_set(base));
}

TEST_CASE("random subsamples respect sizes and seeds") {
  Stream stream(31);
  const Sample sample = make_sample(random_rows(stream, 10, 2),
                                    random_rows(stream, 20, 2));

  Stream pick_a(55);
  const MatchResult full = random_subsample(sample, 10, 20, pick_a);
  CHECK(selected_treated(full).size() == 10);
  CHECK(selected_controls(full).size() == 20);

  Stream pick_b(56);
  const MatchResult some = random_subsample(sample, 4, 9, pick_b);
  CHECK(some.treated_rows.size() == 4);
  CHECK(some.control_rows.size() == 9);
  check_no_duplicates(some);

  Stream pick_c(56);
  const MatchResult again = random_subsample(sample, 4, 9, pick_c);
  CHECK(again.treated_rows == some.treated_rows);
  CHECK(again.control_rows == some.control_rows);

  CHECK_THROWS_AS(random_subsample(sample, 11, 9, pick_b), ConfigError);
}

TEST_CASE("random subsampling stays unbiased for the group means") {
  Component treated;
  treated.center = Vector::Constant(2, 0.8);
  treated.covariance = Matrix::Identity(2, 2);
  treated.group = Group::kTreated;
  Component control;
  control.center = Vector::Zero(2);
  control.covariance = Matrix::Identity(2, 2);
  control.group = Group::kControl;
  const Model model(2, {treated, control});

  const int reps = 2000;
  double sum = 0.0, sumsq = 0.0;
  for (int r = 0; r < reps; ++r) {
    const Sample panel = draw_panel(model, 40, 120, AllocationRule{}, 61, r);
    Stream pick = Stream::keyed(61, {stream_tag::kSubsample,
                                     static_cast<std::uint64_t>(r)});
    const MatchResult sub = random_subsample(panel, 20, 60, pick);
    double mean = 0.0;
    for (int i : sub.treated_rows) mean += panel.treated(i, 0);
    mean /= sub.treated_rows.size();
    sum += mean;
    sumsq += mean * mean;
  }
  const double avg = sum / reps;
  const double var = (sumsq - reps * avg * avg) / (reps - 1);
  const double se = std::sqrt(var / reps);
  CHECK(std::abs(avg - 0.8) < 4.0 * se);
}

TEST_CASE("coordinate matching ignores everything but its column") {
  Stream stream(41);
  const Sample sample =
      make_sample(shifted(random_rows(stream, 6, 2), 1.0),
                  random_rows(stream, 15, 2));
  MatchSpec spec;
  spec.method = MatchMethod::kCoordinate;
  spec.coordinate = 0;
  const MatchResult base = coordinate_match(sample, spec);

  Matrix scale_other = Matrix::Identity(2, 2);
  scale_other(1, 1) = 9.0;
  const MatchResult scaled =
      coordinate_match(mapped(sample, scale_other, Vector::Zero(2)), spec);
  CHECK(pair_set(scaled) == pair_set(base));

  Matrix rot(2, 2);
  double c45 = std::cos(0.7), s45 = std::sin(0.7);
  rot << c45, -s45, s45, c45;
  const MatchResult turned =
      coordinate_match(mapped(sample, rot, Vector::Zero(2)), spec);
  CHECK(pair_set(turned) != pair_set(base));
}

TEST_CASE("one dimensional coordinate matching coincides with greedy") {
  const Sample sample = line_sample({4.0, 6.0, 5.0}, {4.4, 5.8, 0.0, 5.1});
  MatchSpec spec;
  spec.method = MatchMethod::kCoordinate;
  spec.coordinate = 0;
  const MatchResult coord = coordinate_match(sample, spec);
  const MatchResult greedy = mahalanobis_greedy_match(sample, MatchSpec{});
  CHECK(pair_set(coord) == pair_set(greedy));
}

TEST_CASE("every affinely invariant method survives 25 random maps") {
  Stream stream(71);
  const Sample sample =
      make_sample(shifted(random_rows(stream, 15, 3), 0.5),
                  random_rows(stream, 45, 3));

  const std::vector<MatchMethod> methods = {
      MatchMethod::kMahalanobisGreedy, MatchMethod::kMahalanobisOptimal,
      MatchMethod::kDiscriminantCaliper};
  for (MatchMethod method : methods) {
    MatchSpec spec;
    spec.method = method;
    const MatchResult base = run_matcher(sample, spec);
    check_no_duplicates(base);
    Stream maps(72);
    for (int m = 0; m < 25; ++m) {
      const Matrix a = random_invertible(maps, 3);
      Vector b(3);
      for (int i = 0; i < 3; ++i) b[i] = maps.normal();
      const MatchResult moved = run_matcher(mapped(sample, a, b), spec);
      CHECK(pair_set(moved) == pair_set(base));
    }
  }
}

}  // TEST_SUITE
