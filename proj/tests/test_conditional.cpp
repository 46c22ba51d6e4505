#include "dmpes/conditional.hpp"

#include <cmath>
#include <vector>

#include <Eigen/Cholesky>
#include <doctest.h>

#include "dmpes/decompose.hpp"

namespace {

using namespace dmpes;

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

ConditionalComponent cond_comp(const Vector& center, const Matrix& cov,
                               Group group) {
  ConditionalComponent c;
  c.special_probs = vec({0.5, 0.5});
  c.conditional_center = center;
  c.conditional_covariance = cov;
  c.group = group;
  return c;
}

Matrix binary_support() {
  Matrix s(2, 1);
  s << 0.0, 1.0;
  return s;
}

/// p = 3, one binary special column in front, two remainder columns with
/// the given regression slope on the special.
ConditionalModel small_model(const Matrix& regression) {
  std::vector<ConditionalComponent> comps;
  comps.push_back(cond_comp(vec({0.6, 0.6}), Matrix::Identity(2, 2),
                            Group::kTreated));
  comps.push_back(cond_comp(vec({0.0, 0.0}), Matrix::Identity(2, 2),
                            Group::kControl));
  return ConditionalModel(3, {0}, binary_support(), regression,
                          std::move(comps));
}

Sample flat_sample(const Matrix& treated, const Matrix& control) {
  Sample s;
  s.treated = treated;
  s.control = control;
  s.treated_component = std::vector<int>(treated.rows(), 0);
  s.control_component = std::vector<int>(control.rows(), 1);
  return s;
}

}  // namespace

TEST_SUITE("conditional") {

TEST_CASE("residualizing with no special columns changes nothing") {
  Matrix t(2, 3), c(2, 3);
  t << 1, 2, 3, 4, 5, 6;
  c << 0, 1, 0, 1, 0, 1;
  const Sample sample = flat_sample(t, c);
  const auto [out, slope] = residualize_remainder(sample, {});
  CHECK((out.treated - t).norm() == 0.0);
  CHECK((out.control - c).norm() == 0.0);
  CHECK(slope.size() == 0);
}

TEST_CASE("an exactly linear remainder residualizes to zero") {
  Matrix t(3, 2), c(3, 2);
  t << 0.0, 0.0, 1.0, 2.0, 2.0, 4.0;
  c << -1.0, -2.0, 0.5, 1.0, 3.0, 6.0;
  const Sample sample = flat_sample(t, c);
  const auto [out, slope] = residualize_remainder(sample, {0});
  REQUIRE(slope.rows() == 1);
  REQUIRE(slope.cols() == 1);
  CHECK(slope(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(out.treated.col(1).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(out.control.col(1).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((out.treated.col(0) - t.col(0)).norm() == 0.0);
  CHECK((out.control.col(0) - c.col(0)).norm() == 0.0);
}

TEST_CASE("a zero population slope is estimated as statistically zero") {
  const ConditionalModel model = small_model(Matrix::Zero(2, 1));
  const Sample panel =
      draw_conditional_panel(model, 200, 200, AllocationRule{}, 19, 0);
  const auto [out, slope] = residualize_remainder(panel, {0});
  REQUIRE(slope.rows() == 2);
  REQUIRE(slope.cols() == 1);

  // Pooled within-group centering, exactly as the fit uses.
  auto centered = [](const Matrix& block) {
    return Matrix(block.rowwise() - block.colwise().mean());
  };
  const Matrix st = centered(panel.treated.col(0));
  const Matrix sc = centered(panel.control.col(0));
  const double sxx = st.squaredNorm() + sc.squaredNorm();
  const int n = panel.n_treated() + panel.n_control();
  for (int j = 0; j < 2; ++j) {
    const Matrix rt = centered(out.treated.col(1 + j));
    const Matrix rc = centered(out.control.col(1 + j));
    const double rss = rt.squaredNorm() + rc.squaredNorm();
    const double se = std::sqrt(rss / (n - 3) / sxx);
    CHECK(std::abs(slope(j, 0)) < 4.0 * se);

    // Whatever the estimate, the fit decorrelates in sample exactly.
    const double cross = (st.transpose() * rt + sc.transpose() * rc)(0, 0);
    CHECK(std::abs(cross) < 1e-8);
  }
}

TEST_CASE("duplicated special columns cannot be residualized on") {
  Matrix t(3, 3), c(3, 3);
  t << 0, 0, 1, 1, 1, 2, 2, 2, 3;
  c << 0, 0, 5, 1, 1, 4, 3, 3, 2;
  const Sample sample = flat_sample(t, c);
  CHECK_THROWS_AS(residualize_remainder(sample, {0, 1}), ConditioningError);
}

TEST_CASE("constant special columns contribute nothing to the fit") {
  Matrix t(3, 3), c(3, 3);
  t << 7, 0.0, 1.0, 7, 1.0, 3.0, 7, 2.0, 5.0;
  c << 7, -1.0, -1.0, 7, 0.5, 2.0, 7, 3.0, 7.0;
  const Sample sample = flat_sample(t, c);
  const auto [out, slope] = residualize_remainder(sample, {0});
  CHECK(slope.col(0).cwiseAbs().maxCoeff() == 0.0);
  CHECK((out.treated - t).norm() == 0.0);
  CHECK((out.control - c).norm() == 0.0);
}

TEST_CASE("canonicalizing twice leaves the invariants alone") {
  Matrix shared(2, 2);
  shared << 2.0, 1.0, 1.0, 2.0;
  std::vector<ConditionalComponent> comps;
  comps.push_back(cond_comp(vec({1.0, 1.0}), shared, Group::kTreated));
  comps.push_back(cond_comp(vec({0.0, 0.0}), shared, Group::kControl));
  Matrix reg(2, 1);
  reg << 0.7, -0.2;
  const ConditionalModel model(3, {0}, binary_support(), reg,
                               std::move(comps));

  const auto [map, canon] = conditional_canonicalize(model);
  const auto [map2, canon2] = conditional_canonicalize(canon);

  for (int k = 0; k < 2; ++k) {
    CHECK(map2.sigma2[k] == doctest::Approx(map.sigma2[k]).epsilon(1e-10));
    CHECK(std::abs(map2.delta[k] - map2.delta[0]) ==
          doctest::Approx(std::abs(map.delta[k] - map.delta[0]))
              .epsilon(1e-10));
  }
  CHECK(canon2.regression().cwiseAbs().maxCoeff() == 0.0);
  CHECK(canon.special_columns() == std::vector<int>{0});
}

TEST_CASE("canonical separations are scaled mahalanobis center gaps") {
  Matrix shared(2, 2);
  shared << 2.0, 1.0, 1.0, 2.0;
  const Vector gap = vec({1.0, 1.0});
  std::vector<ConditionalComponent> comps;
  comps.push_back(cond_comp(gap, shared, Group::kTreated));
  comps.push_back(cond_comp(vec({0.0, 0.0}), shared, Group::kControl));
  const ConditionalModel model(3, {0}, binary_support(), Matrix::Zero(2, 1),
                               std::move(comps));

  const auto [map, canon] = conditional_canonicalize(model);
  const double m2 = gap.dot(shared.llt().solve(gap));
  const double expected = std::sqrt(m2) / std::sqrt(2.0);
  CHECK(std::abs(map.delta[0] - map.delta[1]) ==
        doctest::Approx(expected).epsilon(1e-10));
  CHECK_FALSE(map.degenerate);

  // Both canonical conditional covariances are spherical with the right
  // relative scale (here equal scales).
  const Matrix c0 = canon.component(0).conditional_covariance;
  const Matrix c1 = canon.component(1).conditional_covariance;
  CHECK((c1 - Matrix::Identity(2, 2)).norm() < 1e-8);
  CHECK((c0 - c1).norm() < 1e-8);
}

TEST_CASE("coincident conditional centers flatten every separation") {
  std::vector<ConditionalComponent> comps;
  comps.push_back(cond_comp(vec({0.4, -0.3}), 2.0 * Matrix::Identity(2, 2),
                            Group::kTreated));
  comps.push_back(cond_comp(vec({0.4, -0.3}), Matrix::Identity(2, 2),
                            Group::kControl));
  const ConditionalModel model(3, {0}, binary_support(), Matrix::Zero(2, 1),
                               std::move(comps));
  const auto [map, canon] = conditional_canonicalize(model);
  CHECK(map.degenerate);
  CHECK(map.delta.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("subspace splits follow the orthonormal projection") {
  SUBCASE("a special axis lies inside the subspace") {
    const ScriptDecomposition d =
        script_decompose(Direction::unit(vec({1, 0, 0})), 1, false);
    CHECK(d.rho == doctest::Approx(1.0));
    CHECK(d.degenerate_rest);
    CHECK((d.psi - vec({1, 0, 0})).norm() < 1e-12);
    CHECK(d.gamma.norm() == 0.0);
  }

  SUBCASE("the remainder diagonal lies inside the subspace") {
    const ScriptDecomposition d =
        script_decompose(Direction::unit(vec({0, 1, 1})), 1, false);
    CHECK(d.rho == doctest::Approx(1.0));
    CHECK(d.degenerate_rest);
  }

  SUBCASE("a contrast across remainder coordinates is fully outside") {
    const Direction y = Direction::unit(vec({0, 1, -1}));
    const ScriptDecomposition d = script_decompose(y, 1, false);
    CHECK(d.rho < 1e-12);
    CHECK(d.degenerate_span);
    CHECK(d.psi.norm() == 0.0);
    CHECK((d.gamma - y.coefficients()).norm() < 1e-12);
    CHECK(d.gamma[0] == 0.0);
  }

  SUBCASE("a generic direction matches the two-vector projection oracle") {
    const Direction y = Direction::unit(vec({0.5, 0.7, 0.3}));
    const ScriptDecomposition d = script_decompose(y, 1, false);

    const Vector e0 = vec({1, 0, 0});
    const Vector diag = vec({0, 1, 1}) / std::sqrt(2.0);
    const Vector yv = y.coefficients();
    const Vector proj = yv.dot(e0) * e0 + yv.dot(diag) * diag;
    CHECK(d.rho == doctest::Approx(proj.norm()).epsilon(1e-12));
    CHECK((d.psi - proj / proj.norm()).norm() < 1e-10);
    CHECK(d.psi.norm() == doctest::Approx(1.0));
    CHECK(d.gamma[0] == doctest::Approx(0.0));
    CHECK(d.psi.dot(d.gamma) == doctest::Approx(0.0).epsilon(1e-12));
    const Vector rebuilt =
        d.rho * d.psi + std::sqrt(1.0 - d.rho * d.rho) * d.gamma;
    CHECK((rebuilt - yv).norm() < 1e-10);
  }

  SUBCASE("a degenerate remainder shrinks the subspace to the specials") {
    const Direction y = Direction::unit(vec({0.6, 0.8, 0.0}));
    const ScriptDecomposition d = script_decompose(y, 1, true);
    CHECK(d.rho == doctest::Approx(0.6));
    CHECK((d.psi - vec({1, 0, 0})).norm() < 1e-12);
  }
}

TEST_CASE("block structure fits recover exact block parameters") {
  SUBCASE("a block diagonal matrix with spherical remainder fits cleanly") {
    Matrix m = Matrix::Identity(3, 3);
    m(0, 0) = 4.0;
    const BlockStructureFit f = fit_block_structure(m, 1);
    CHECK(f.special_block(0, 0) == doctest::Approx(4.0));
    CHECK(f.cross_coefficients.cwiseAbs().maxCoeff() < 1e-14);
    CHECK(f.remainder_scale == doctest::Approx(1.0));
    CHECK(f.remainder_coefficient == doctest::Approx(0.0));
    CHECK(f.cross_residual < 1e-14);
    CHECK(f.remainder_residual < 1e-14);
    CHECK(f.total_residual < 1e-14);
  }

  SUBCASE("an exact two by two block model is reproduced") {
    Matrix m(4, 4);
    m << 3.0, 1.0, 2.0, 2.0,
         1.0, 2.0, -1.0, -1.0,
         2.0, -1.0, 1.5, 0.5,
         2.0, -1.0, 0.5, 1.5;
    const BlockStructureFit f = fit_block_structure(m, 2);
    CHECK((f.special_block - m.topLeftCorner(2, 2)).norm() < 1e-12);
    CHECK(f.cross_coefficients[0] == doctest::Approx(2.0));
    CHECK(f.cross_coefficients[1] == doctest::Approx(-1.0));
    CHECK(f.remainder_scale == doctest::Approx(1.0));
    CHECK(f.remainder_coefficient == doctest::Approx(0.5));
    CHECK(f.total_residual < 1e-12);
  }
}

}  // TEST_SUITE
