#include "dmpes/sampler.hpp"

#include <cmath>
#include <vector>

#include <doctest.h>

namespace {

using namespace dmpes;

Component canonical_component(Eigen::Index p, RadialLaw law = {}) {
  Component c;
  c.center = Vector::Zero(p);
  c.covariance = Matrix::Identity(p, p);
  c.radial = law;
  c.weight = 1.0;
  c.group = Group::kControl;
  return c;
}

Matrix sample_covariance(const Matrix& rows) {
  const Vector mean = rows.colwise().mean().transpose();
  const Matrix centered = rows.rowwise() - mean.transpose();
  return centered.transpose() * centered / double(rows.rows() - 1);
}

RadialLaw student_t(double df) {
  RadialLaw law;
  law.kind = RadialLaw::Kind::kStudentT;
  law.degrees_of_freedom = df;
  return law;
}

RadialLaw uniform_ball() {
  RadialLaw law;
  law.kind = RadialLaw::Kind::kUniformBall;
  return law;
}

Model two_group_model(Eigen::Index p) {
  Component treated = canonical_component(p);
  treated.center = Vector::Constant(p, 0.4);
  treated.group = Group::kTreated;
  Component control = canonical_component(p);
  return Model(p, {treated, control});
}

}  // namespace

TEST_SUITE("sampler") {

TEST_CASE("zero requested rows give an empty matrix") {
  Stream stream(1);
  const Matrix rows = sample_component(canonical_component(3), 0, stream);
  CHECK(rows.rows() == 0);
  CHECK(rows.cols() == 3);
}

TEST_CASE("normal draws center and spread as configured") {
  const int n = 100000;
  Stream stream = Stream::keyed(11, {stream_tag::kRows, 0});
  const Matrix rows = sample_component(canonical_component(4), n, stream);
  REQUIRE(rows.rows() == n);

  const Vector mean = rows.colwise().mean().transpose();
  for (Eigen::Index i = 0; i < 4; ++i) {
    CHECK(std::abs(mean[i]) < 4.0 / std::sqrt(double(n)));
  }
  const Matrix cov = sample_covariance(rows);
  CHECK((cov - Matrix::Identity(4, 4)).norm() <
        0.05 * Matrix::Identity(4, 4).norm());
}

TEST_CASE("heavy tailed draws still carry the configured covariance") {
  Matrix sigma(2, 2);
  sigma << 2.0, 0.5, 0.5, 1.0;
  Component c = canonical_component(2, student_t(5.0));
  c.covariance = sigma;

  const int n = 100000;
  Stream stream = Stream::keyed(12, {stream_tag::kRows, 1});
  const Matrix rows = sample_component(c, n, stream);
  CHECK((sample_covariance(rows) - sigma).norm() < 0.05 * sigma.norm());
}

TEST_CASE("bounded support draws carry the configured covariance") {
  Matrix sigma(3, 3);
  sigma << 1.0, 0.2, 0.0, 0.2, 1.5, 0.1, 0.0, 0.1, 0.8;
  Component c = canonical_component(3, uniform_ball());
  c.covariance = sigma;

  const int n = 100000;
  Stream stream = Stream::keyed(13, {stream_tag::kRows, 2});
  const Matrix rows = sample_component(c, n, stream);
  CHECK((sample_covariance(rows) - sigma).norm() < 0.05 * sigma.norm());
}

TEST_CASE("normalized draws spread evenly over the sphere") {
  const int n = 100000;
  const Eigen::Index p = 4;
  Stream stream = Stream::keyed(14, {stream_tag::kRows, 3});
  const Matrix rows =
      sample_component(canonical_component(p, student_t(5.0)), n, stream);

  Matrix unit(n, p);
  for (int i = 0; i < n; ++i) unit.row(i) = rows.row(i).normalized();

  const Vector mean = unit.colwise().mean().transpose();
  const double se = std::sqrt(1.0 / double(p)) / std::sqrt(double(n));
  for (Eigen::Index i = 0; i < p; ++i) {
    CHECK(std::abs(mean[i]) < 4.0 * se);
  }
  const Matrix ideal = Matrix::Identity(p, p) / double(p);
  CHECK((sample_covariance(unit) - ideal).norm() < 0.05 * ideal.norm());
}

TEST_CASE("proportional allocation is binomial on average") {
  Component a = canonical_component(2);
  Component b = canonical_component(2);
  b.center = Vector::Ones(2);
  const Model model(2, {a, b});

  const int total = 10000;
  const int reps = 2000;
  double sum = 0.0;
  for (int r = 0; r < reps; ++r) {
    Stream stream = Stream::keyed(21, {stream_tag::kCounts,
                                       static_cast<std::uint64_t>(r)});
    const std::vector<int> counts =
        allocate_counts(model, Group::kControl, total, AllocationRule{},
                        stream);
    REQUIRE(counts.size() == 2);
    CHECK(counts[0] + counts[1] == total);
    sum += counts[0];
  }
  const double sd = std::sqrt(total * 0.25);
  CHECK(std::abs(sum / reps - 5000.0) < 4.0 * sd / std::sqrt(double(reps)));
}

TEST_CASE("fixed allocation honors the requested counts") {
  Component a = canonical_component(2);
  Component b = canonical_component(2);
  b.center = Vector::Ones(2);
  const Model model(2, {a, b});

  AllocationRule rule;
  rule.kind = AllocationRule::Kind::kFixed;
  rule.fixed_counts = {30, 70};
  Stream stream(3);
  const std::vector<int> counts =
      allocate_counts(model, Group::kControl, 100, rule, stream);
  CHECK(counts[0] == 30);
  CHECK(counts[1] == 70);

  rule.fixed_counts = {30, 60};
  CHECK_THROWS_AS(
      allocate_counts(model, Group::kControl, 100, rule, stream),
      ConfigError);
}

TEST_CASE("panels are a pure function of seed and replication") {
  const Model model = two_group_model(3);
  const Sample one = draw_panel(model, 40, 80, AllocationRule{}, 77, 5);
  const Sample two = draw_panel(model, 40, 80, AllocationRule{}, 77, 5);
  CHECK((one.treated - two.treated).norm() == 0.0);
  CHECK((one.control - two.control).norm() == 0.0);
  CHECK(one.treated_component == two.treated_component);
  CHECK(one.control_component == two.control_component);

  const Sample other = draw_panel(model, 40, 80, AllocationRule{}, 77, 6);
  CHECK((one.treated - other.treated).norm() != 0.0);
}

TEST_CASE("single component groups label every row alike") {
  const Model model = two_group_model(2);
  const Sample panel = draw_panel(model, 25, 50, AllocationRule{}, 9, 0);
  for (int label : panel.treated_component) CHECK(label == 0);
  for (int label : panel.control_component) CHECK(label == 1);
}

}  // TEST_SUITE
