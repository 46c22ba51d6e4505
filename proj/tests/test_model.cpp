#include "dmpes/model.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <doctest.h>

#include "dmpes/decompose.hpp"
#include "dmpes/sampler.hpp"

namespace {

using namespace dmpes;

Component comp(Vector center, Matrix covariance, Group group,
               double weight = 1.0, RadialLaw radial = {}) {
  Component c;
  c.center = std::move(center);
  c.covariance = std::move(covariance);
  c.radial = radial;
  c.weight = weight;
  c.group = group;
  return c;
}

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

Model shifted_pair(Eigen::Index p, double gap) {
  std::vector<Component> cs;
  cs.push_back(comp(Vector::Constant(p, gap), Matrix::Identity(p, p),
                    Group::kTreated));
  cs.push_back(comp(Vector::Zero(p), Matrix::Identity(p, p),
                    Group::kControl));
  return Model(p, std::move(cs));
}

/// Sorted (sigma2, delta) pairs; the canonical invariants of a model.
std::vector<std::pair<double, double>> invariants(const CanonicalMap& map) {
  std::vector<std::pair<double, double>> out;
  for (Eigen::Index k = 0; k < map.sigma2.size(); ++k) {
    out.emplace_back(map.sigma2[k], map.delta[k]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

Matrix random_invertible(Stream& stream, Eigen::Index p) {
  for (;;) {
    Matrix a(p, p);
    for (Eigen::Index i = 0; i < p; ++i)
      for (Eigen::Index j = 0; j < p; ++j) a(i, j) = stream.normal();
    if (std::abs(a.determinant()) > 0.1) return a;
  }
}

Model mapped_model(const Model& model, const Matrix& a, const Vector& b) {
  std::vector<Component> cs;
  for (const Component& c : model.components()) {
    cs.push_back(comp(a * c.center + b, a * c.covariance * a.transpose(),
                      c.group, c.weight, c.radial));
  }
  return Model(model.dimension(), std::move(cs));
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("proportional covariances with one shifted center validate") {
  std::vector<Component> cs;
  cs.push_back(comp(vec({0, 0, 0}), Matrix::Identity(3, 3),
                    Group::kControl));
  cs.push_back(comp(vec({1, 0, 0}), 2.0 * Matrix::Identity(3, 3),
                    Group::kTreated));
  const Model model(3, std::move(cs));
  const ValidationReport report = validate(model);
  CHECK(report.ok());
  REQUIRE(report.covariance_ratios.size() == 2);
  CHECK(report.covariance_ratios[1] == doctest::Approx(2.0));
}

TEST_CASE("a ladder of collinear centers validates with aligned gaps") {
  const Vector ones = Vector::Ones(4);
  std::vector<Component> cs;
  cs.push_back(comp(Vector::Zero(4), Matrix::Identity(4, 4),
                    Group::kControl));
  cs.push_back(comp(ones, Matrix::Identity(4, 4), Group::kTreated));
  cs.push_back(comp(2.0 * ones, Matrix::Identity(4, 4), Group::kTreated));
  const Model model(4, std::move(cs));
  const ValidationReport report = validate(model);
  CHECK(report.ok());
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      CHECK(std::abs(report.discriminant_cosines(i, j)) ==
            doctest::Approx(1.0).epsilon(1e-8));
    }
  }
}

TEST_CASE("orthogonal center gaps are rejected by the cosine check") {
  std::vector<Component> cs;
  cs.push_back(comp(vec({0, 0}), Matrix::Identity(2, 2), Group::kControl));
  cs.push_back(comp(vec({1, 0}), Matrix::Identity(2, 2), Group::kTreated));
  cs.push_back(comp(vec({0, 1}), Matrix::Identity(2, 2), Group::kTreated));
  const Model model(2, std::move(cs));
  const ValidationReport report = validate(model);
  REQUIRE_FALSE(report.ok());
  bool named = false;
  for (const Violation& v : report.violations) {
    if (v.condition == "collinear-discriminants") named = true;
  }
  CHECK(named);
  CHECK_THROWS_AS(require_valid(model), ValidationError);
}

TEST_CASE("non positive definite covariance names the component") {
  Matrix bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;
  std::vector<Component> cs;
  cs.push_back(comp(vec({0, 0}), Matrix::Identity(2, 2), Group::kControl));
  cs.push_back(comp(vec({1, 1}), bad, Group::kTreated));
  const Model model(2, std::move(cs));
  try {
    validate(model);
    FAIL("expected a structural error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("component 1") != std::string::npos);
    CHECK(std::string(e.what()).find("positive definite") !=
          std::string::npos);
  }
}

TEST_CASE("canonical scales and separations match the direct solve") {
  Matrix base(2, 2);
  base << 2.0, 1.0, 1.0, 2.0;
  std::vector<Component> cs;
  cs.push_back(comp(vec({0, 0}), base, Group::kControl));
  cs.push_back(comp(vec({1, 1}), 2.0 * base, Group::kTreated));
  const Model model(2, std::move(cs));
  auto [map, canonical] = canonicalize(model);

  CHECK(map.sigma2[1] / map.sigma2[0] == doctest::Approx(2.0).epsilon(1e-10));

  const Vector gap = vec({1, 1});
  const double mahal = std::sqrt(gap.dot(base.llt().solve(gap)));
  CHECK(map.delta[1] - map.delta[0] ==
        doctest::Approx(mahal / std::sqrt(2.0)).epsilon(1e-10));

  for (int k = 0; k < canonical.component_count(); ++k) {
    const Component& c = canonical.component(k);
    CHECK((c.covariance - map.sigma2[k] * Matrix::Identity(2, 2)).norm() ==
          doctest::Approx(0.0).epsilon(1e-8));
    CHECK((c.center - map.delta[k] * Vector::Ones(2)).norm() ==
          doctest::Approx(0.0).epsilon(1e-8));
  }
}

TEST_CASE("the treated group sits above the control group after mapping") {
  Matrix base(3, 3);
  base << 1.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 1.0;
  std::vector<Component> cs;
  cs.push_back(comp(vec({4, 5, 6}), base, Group::kTreated));
  cs.push_back(comp(vec({5, 6, 7}), 1.5 * base, Group::kControl));
  const Model model(3, std::move(cs));
  auto [map, canonical] = canonicalize(model);
  CHECK(map.delta[0] >= map.delta[1]);
}

TEST_CASE("coincident centers collapse every separation to zero") {
  const Vector mu = vec({3, -1});
  std::vector<Component> cs;
  cs.push_back(comp(mu, Matrix::Identity(2, 2), Group::kControl));
  cs.push_back(comp(mu, 2.0 * Matrix::Identity(2, 2), Group::kTreated));
  const Model model(2, std::move(cs));
  auto [map, canonical] = canonicalize(model);
  CHECK(map.degenerate);
  for (Eigen::Index k = 0; k < map.delta.size(); ++k) {
    CHECK(std::abs(map.delta[k]) < 1e-10);
  }
  CHECK(population_discriminant(model).is_zero());
}

TEST_CASE("canonicalizing a canonical model fixes the invariants") {
  std::vector<Component> cs;
  cs.push_back(comp(0.4 * Vector::Ones(3), Matrix::Identity(3, 3),
                    Group::kTreated));
  cs.push_back(comp(0.8 * Vector::Ones(3), 1.5 * Matrix::Identity(3, 3),
                    Group::kTreated));
  cs.push_back(comp(Vector::Zero(3), 1.2 * Matrix::Identity(3, 3),
                    Group::kControl));
  const Model model(3, std::move(cs));
  auto [map, canonical] = canonicalize(model);
  CHECK(std::abs(map.sigma2[0] - 1.0) < 1e-10);
  CHECK(std::abs(map.sigma2[1] - 1.5) < 1e-10);
  CHECK(std::abs(map.sigma2[2] - 1.2) < 1e-10);
  CHECK(std::abs((map.delta[1] - map.delta[0]) - 0.4) < 1e-10);
  CHECK(std::abs((map.delta[0] - map.delta[2]) - 0.4) < 1e-10);

  auto [again, twice] = canonicalize(canonical);
  const auto a = invariants(map);
  const auto b = invariants(again);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::abs(a[i].first - b[i].first) < 1e-10);
    CHECK(std::abs(a[i].second - b[i].second) < 1e-10);
  }
}

TEST_CASE("canonical invariants ignore affine changes of coordinates") {
  Matrix base(3, 3);
  base << 2.0, 0.5, 0.2, 0.5, 1.5, 0.3, 0.2, 0.3, 1.0;
  const Vector ray = vec({1, -2, 0.5});
  std::vector<Component> cs;
  cs.push_back(comp(vec({1, 2, 3}), base, Group::kControl));
  cs.push_back(comp(Vector(vec({1, 2, 3}) + 0.7 * ray), 1.8 * base,
                    Group::kTreated));
  cs.push_back(comp(Vector(vec({1, 2, 3}) + 1.4 * ray), 0.6 * base,
                    Group::kTreated, 0.5));
  const Model model(3, std::move(cs));
  auto [map, canonical] = canonicalize(model);
  const auto reference = invariants(map);

  Stream stream(2024);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix a = random_invertible(stream, 3);
    Vector b(3);
    for (Eigen::Index i = 0; i < 3; ++i) b[i] = stream.normal();
    auto [mapped, ignored] = canonicalize(mapped_model(model, a, b));
    const auto moved = invariants(mapped);
    for (std::size_t i = 0; i < reference.size(); ++i) {
      CHECK(moved[i].first ==
            doctest::Approx(reference[i].first).epsilon(1e-8));
      CHECK(moved[i].second ==
            doctest::Approx(reference[i].second).epsilon(1e-8));
    }
  }
}

TEST_CASE("the canonical map transports the original moments") {
  Matrix base(2, 2);
  base << 3.0, 1.0, 1.0, 2.0;
  std::vector<Component> cs;
  cs.push_back(comp(vec({-1, 2}), base, Group::kControl));
  cs.push_back(comp(vec({0, 4}), 1.3 * base, Group::kTreated));
  const Model model(2, std::move(cs));
  auto [map, canonical] = canonicalize(model);
  for (int k = 0; k < model.component_count(); ++k) {
    const Component& orig = model.component(k);
    const Component& canon = canonical.component(k);
    CHECK((map.apply(orig.center) - canon.center).norm() < 1e-8);
    CHECK((map.linear * orig.covariance * map.linear.transpose() -
           canon.covariance)
              .norm() < 1e-8);
    CHECK((map.invert(canon.center) - orig.center).norm() < 1e-8);
  }
}

TEST_CASE("rescaling one covariance never changes the verdict") {
  std::vector<Component> ok;
  ok.push_back(comp(vec({0, 0}), Matrix::Identity(2, 2), Group::kControl));
  ok.push_back(comp(vec({1, 1}), Matrix::Identity(2, 2), Group::kTreated));
  std::vector<Component> bad;
  bad.push_back(comp(vec({0, 0}), Matrix::Identity(2, 2), Group::kControl));
  bad.push_back(comp(vec({1, 0}), Matrix::Identity(2, 2), Group::kTreated));
  bad.push_back(comp(vec({0, 1}), Matrix::Identity(2, 2), Group::kTreated));

  for (double scale : {0.25, 1.0, 7.5}) {
    auto scaled_ok = ok;
    scaled_ok[1].covariance *= scale;
    auto scaled_bad = bad;
    scaled_bad[1].covariance *= scale;
    CHECK(validate(Model(2, scaled_ok)).ok());
    CHECK_FALSE(validate(Model(2, scaled_bad)).ok());
  }
}

TEST_CASE("student-t components need more than 2 degrees of freedom") {
  RadialLaw law;
  law.kind = RadialLaw::Kind::kStudentT;
  law.degrees_of_freedom = 2.0;
  std::vector<Component> cs;
  cs.push_back(comp(vec({0, 0}), Matrix::Identity(2, 2), Group::kControl,
                    1.0, law));
  cs.push_back(comp(vec({1, 1}), Matrix::Identity(2, 2), Group::kTreated));
  CHECK_THROWS_AS(Model(2, std::move(cs)), ConfigError);
}

TEST_CASE("affine application is rowwise and composes with its inverse") {
  Matrix rows(2, 2);
  rows << 1.0, 2.0, 3.0, 4.0;

  const Matrix eye = Matrix::Identity(2, 2);
  CHECK((apply_affine(eye, Vector::Zero(2), rows) - rows).norm() == 0.0);

  const Matrix doubled = apply_affine(2.0 * eye, vec({1, -1}), rows);
  const Matrix back = apply_affine(0.5 * eye, vec({-0.5, 0.5}), doubled);
  CHECK((back - rows).norm() < 1e-12);

  CHECK_THROWS_AS(apply_affine(Matrix::Identity(3, 3), Vector::Zero(3), rows),
                  DimensionError);
}

TEST_CASE("sample moments transform with the map they were put through") {
  const Model model = shifted_pair(3, 0.5);
  const Sample panel = draw_panel(model, 2000, 2000, AllocationRule{}, 99, 0);

  Stream stream(5);
  const Matrix a = random_invertible(stream, 3);
  const Vector b = vec({0.5, -2, 1});
  const Matrix mapped = apply_affine(a, b, panel.control);

  const Vector mean = panel.control.colwise().mean().transpose();
  const Matrix centered =
      panel.control.rowwise() - mean.transpose();
  const Matrix cov =
      centered.transpose() * centered / double(panel.n_control() - 1);

  const Vector mapped_mean = mapped.colwise().mean().transpose();
  const Matrix mapped_centered = mapped.rowwise() - mapped_mean.transpose();
  const Matrix mapped_cov = mapped_centered.transpose() * mapped_centered /
                            double(panel.n_control() - 1);

  CHECK((mapped_mean - (a * mean + b)).norm() < 1e-8);
  CHECK((mapped_cov - a * cov * a.transpose()).norm() < 1e-8);
}

TEST_CASE("group moments mix centers and spreads") {
  SUBCASE("a single component group returns its own moments") {
    Matrix base(2, 2);
    base << 2.0, 0.5, 0.5, 1.0;
    std::vector<Component> cs;
    cs.push_back(comp(vec({1, -1}), base, Group::kTreated));
    cs.push_back(comp(vec({0, 0}), base, Group::kControl));
    const Model model(2, std::move(cs));
    auto [mean, cov] = population_group_moments(model, Group::kTreated);
    CHECK((mean - vec({1, -1})).norm() == 0.0);
    CHECK((cov - base).norm() == 0.0);
  }

  SUBCASE("two balanced components add the center spread") {
    const Vector ones = Vector::Ones(3);
    std::vector<Component> cs;
    cs.push_back(comp(Vector(0.7 * ones), Matrix::Identity(3, 3),
                      Group::kTreated));
    cs.push_back(comp(Vector(-0.7 * ones), Matrix::Identity(3, 3),
                      Group::kTreated));
    cs.push_back(comp(Vector::Zero(3), Matrix::Identity(3, 3),
                      Group::kControl));
    const Model model(3, std::move(cs));
    auto [mean, cov] = population_group_moments(model, Group::kTreated);
    CHECK(mean.norm() < 1e-12);
    const Matrix expected =
        Matrix::Identity(3, 3) + 0.49 * ones * ones.transpose();
    CHECK((cov - expected).norm() < 1e-12);
  }

  SUBCASE("canonical mixtures have exchangeable group covariance") {
    std::vector<Component> cs;
    cs.push_back(comp(0.4 * Vector::Ones(4), Matrix::Identity(4, 4),
                      Group::kTreated));
    cs.push_back(comp(0.8 * Vector::Ones(4), 1.5 * Matrix::Identity(4, 4),
                      Group::kTreated));
    cs.push_back(comp(Vector::Zero(4), 1.2 * Matrix::Identity(4, 4),
                      Group::kControl));
    const Model model(4, std::move(cs));
    auto [mean, cov] = population_group_moments(model, Group::kTreated);
    CHECK(fit_exchangeable(cov).residual < 1e-10);
  }
}

TEST_CASE("the population discriminant points along the center gap") {
  SUBCASE("canonical models point along the diagonal") {
    const Model model = shifted_pair(4, 0.5);
    const Direction z = population_discriminant(model);
    CHECK((z.coefficients() - Vector::Constant(4, 0.5)).norm() < 1e-10);
  }

  SUBCASE("identity covariance reduces to the raw gap") {
    std::vector<Component> cs;
    cs.push_back(comp(vec({0, 0, 0}), Matrix::Identity(3, 3),
                      Group::kControl));
    cs.push_back(comp(vec({1, 0, 0}), Matrix::Identity(3, 3),
                      Group::kTreated));
    const Model model(3, std::move(cs));
    const Direction z = population_discriminant(model);
    CHECK((z.coefficients() - vec({1, 0, 0})).norm() < 1e-10);
  }
}

TEST_CASE("a million draws agree with the population moments") {
  RadialLaw ball;
  ball.kind = RadialLaw::Kind::kUniformBall;
  std::vector<Component> cs;
  cs.push_back(comp(0.6 * Vector::Ones(3), Matrix::Identity(3, 3),
                    Group::kTreated));
  cs.push_back(comp(Vector::Zero(3), Matrix::Identity(3, 3),
                    Group::kControl, 0.6));
  cs.push_back(comp(0.5 * Vector::Ones(3), 1.4 * Matrix::Identity(3, 3),
                    Group::kControl, 0.4, ball));
  const Model model(3, std::move(cs));

  const int n = 1000000;
  const Sample panel = draw_panel(model, 10, n, AllocationRule{}, 31, 0);
  auto [mean, cov] = population_group_moments(model, Group::kControl);

  const Vector sample_mean = panel.control.colwise().mean().transpose();
  const Matrix centered = panel.control.rowwise() - sample_mean.transpose();
  const Matrix sample_cov =
      centered.transpose() * centered / double(n - 1);

  for (Eigen::Index i = 0; i < 3; ++i) {
    const double se = std::sqrt(cov(i, i) / n);
    CHECK(std::abs(sample_mean[i] - mean[i]) < 4.0 * se);
    for (Eigen::Index j = i; j < 3; ++j) {
      const Eigen::ArrayXd products =
          centered.col(i).array() * centered.col(j).array();
      const double spread =
          std::sqrt((products - products.mean()).square().sum() / (n - 1));
      CHECK(std::abs(sample_cov(i, j) - cov(i, j)) <
            4.0 * spread / std::sqrt(double(n)));
    }
  }
}

}  // TEST_SUITE
