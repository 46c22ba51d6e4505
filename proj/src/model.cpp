#include "dmpes/model.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>

namespace dmpes {

namespace {

void check_structural(const Model& model) {
  for (int k = 0; k < model.component_count(); ++k) {
    const Matrix& cov = model.component(k).covariance;
    double scale = cov.norm();
    if (!(scale > 0.0) || !cov.allFinite()) {
      throw ValidationError("covariance of component " + std::to_string(k) +
                            " is zero or non-finite");
    }
    if ((cov - cov.transpose()).norm() > 1e-12 * scale) {
      throw ValidationError("covariance of component " + std::to_string(k) +
                            " is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov,
                                             Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() <= 0.0) {
      throw ValidationError("covariance of component " + std::to_string(k) +
                            " is not positive definite");
    }
  }
}

/// Lower Cholesky factor of the reference covariance, with a condition
/// number guard.
Matrix reference_factor(const Model& model) {
  const Matrix& cov = model.component(0).covariance;
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov, Eigen::EigenvaluesOnly);
  double lo = es.eigenvalues().minCoeff();
  double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > kConditionLimit) {
    throw ConditioningError(
        "reference covariance is too ill-conditioned to factor");
  }
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw ConditioningError("Cholesky factorization of reference covariance "
                            "failed");
  }
  return llt.matrixL();
}

/// Component centers in coordinates where the reference covariance is the
/// identity, relative to the reference center.
std::vector<Vector> whitened_offsets(const Model& model, const Matrix& L) {
  std::vector<Vector> d(model.component_count());
  const Vector& mu0 = model.component(0).center;
  for (int k = 0; k < model.component_count(); ++k) {
    d[k] = L.triangularView<Eigen::Lower>().solve(model.component(k).center -
                                                  mu0);
  }
  return d;
}

double pairwise_spread(const std::vector<Vector>& d) {
  double spread = 0.0;
  for (size_t i = 0; i < d.size(); ++i) {
    for (size_t j = i + 1; j < d.size(); ++j) {
      spread = std::max(spread, (d[i] - d[j]).norm());
    }
  }
  return spread;
}

}  // namespace

Model::Model(Eigen::Index dimension, std::vector<Component> components)
    : dimension_(dimension), components_(std::move(components)) {
  if (dimension_ < 1) {
    throw ConfigError("dimension must be at least 1");
  }
  if (components_.empty()) {
    throw ConfigError("model needs at least one component per group");
  }
  double treated_weight = 0.0;
  double control_weight = 0.0;
  for (size_t k = 0; k < components_.size(); ++k) {
    const Component& c = components_[k];
    if (c.center.size() != dimension_) {
      throw DimensionError("center of component " + std::to_string(k) +
                           " has size " + std::to_string(c.center.size()) +
                           ", expected " + std::to_string(dimension_));
    }
    if (c.covariance.rows() != dimension_ ||
        c.covariance.cols() != dimension_) {
      throw DimensionError("covariance of component " + std::to_string(k) +
                           " must be " + std::to_string(dimension_) + "x" +
                           std::to_string(dimension_));
    }
    if (!(c.weight >= 0.0) || !std::isfinite(c.weight)) {
      throw ConfigError("weight of component " + std::to_string(k) +
                        " must be finite and nonnegative");
    }
    if (c.radial.kind == RadialLaw::Kind::kStudentT &&
        !(c.radial.degrees_of_freedom > 2.0)) {
      throw ConfigError("student-t component " + std::to_string(k) +
                        " needs more than 2 degrees of freedom");
    }
    (c.group == Group::kTreated ? treated_weight : control_weight) += c.weight;
  }
  if (!(treated_weight > 0.0)) {
    throw ConfigError("treated group has no positive-weight component");
  }
  if (!(control_weight > 0.0)) {
    throw ConfigError("control group has no positive-weight component");
  }
}

std::vector<int> Model::group_indices(Group g) const {
  std::vector<int> out;
  for (int k = 0; k < component_count(); ++k) {
    if (components_[k].group == g) out.push_back(k);
  }
  return out;
}

Vector Model::group_weights(Group g) const {
  std::vector<int> idx = group_indices(g);
  Vector w(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) w[i] = components_[idx[i]].weight;
  return w / w.sum();
}

std::string ValidationReport::summary() const {
  if (violations.empty()) return "ok";
  std::ostringstream os;
  for (size_t i = 0; i < violations.size(); ++i) {
    if (i) os << "; ";
    os << violations[i].condition << ": " << violations[i].detail
       << " (residual " << violations[i].residual << ")";
  }
  return os.str();
}

ValidationReport validate(const Model& model) {
  check_structural(model);
  const int K = model.component_count();
  ValidationReport report;
  report.covariance_ratios = Vector::Ones(K);
  report.discriminant_cosines = Matrix::Ones(K, K);

  const Matrix& ref = model.component(0).covariance;
  double ref_sq = ref.squaredNorm();
  for (int k = 1; k < K; ++k) {
    const Matrix& cov = model.component(k).covariance;
    double ratio = (cov.array() * ref.array()).sum() / ref_sq;
    report.covariance_ratios[k] = ratio;
    double residual = (cov - ratio * ref).norm() / cov.norm();
    if (!(ratio > 0.0) || residual > kStructureTol) {
      report.violations.push_back(
          {"proportional-covariance",
           "component " + std::to_string(k) +
               " is not a positive multiple of component 0",
           residual});
    }
  }

  Matrix L = reference_factor(model);
  std::vector<Vector> d = whitened_offsets(model, L);
  Vector ref_dir;
  int ref_i = -1, ref_j = -1;
  double best = kDegenerateSpread;
  for (int i = 0; i < K; ++i) {
    for (int j = i + 1; j < K; ++j) {
      double n = (d[j] - d[i]).norm();
      if (n > best) {
        best = n;
        ref_i = i;
        ref_j = j;
      }
    }
  }
  if (ref_i >= 0) {
    ref_dir = (d[ref_j] - d[ref_i]).normalized();
    for (int i = 0; i < K; ++i) {
      for (int j = i + 1; j < K; ++j) {
        Vector e = d[j] - d[i];
        double n = e.norm();
        if (n <= kDegenerateSpread) continue;
        double cosine = std::abs(ref_dir.dot(e) / n);
        report.discriminant_cosines(i, j) = cosine;
        report.discriminant_cosines(j, i) = cosine;
        if (1.0 - cosine > kStructureTol) {
          report.violations.push_back(
              {"collinear-discriminants",
               "center offset between components " + std::to_string(i) +
                   " and " + std::to_string(j) +
                   " leaves the common discriminant line",
               1.0 - cosine});
        }
      }
    }
  }
  return report;
}

void require_valid(const Model& model) {
  ValidationReport report = validate(model);
  if (!report.ok()) {
    throw ValidationError("model violates mixture structure: " +
                          report.summary());
  }
}

Matrix CanonicalMap::apply_rows(const Matrix& rows) const {
  return apply_affine(linear, offset, rows);
}

Vector CanonicalMap::invert(const Vector& y) const {
  return linear.partialPivLu().solve(y - offset);
}

Direction CanonicalMap::pullback(const Direction& canonical) const {
  if (canonical.is_zero()) return Direction::zero(linear.cols());
  return Direction::unit(linear.transpose() * canonical.coefficients());
}

std::pair<CanonicalMap, Model> canonicalize(const Model& model) {
  require_valid(model);
  const Eigen::Index p = model.dimension();
  const int K = model.component_count();

  Matrix L = reference_factor(model);
  std::vector<Vector> d = whitened_offsets(model, L);
  double spread = pairwise_spread(d);

  Vector c = Vector::Zero(K);
  Vector v;
  bool degenerate = spread < kDegenerateSpread;
  if (!degenerate) {
    int far = 0;
    for (int k = 1; k < K; ++k) {
      if (d[k].norm() > d[far].norm()) far = k;
    }
    v = d[far].normalized();
    for (int k = 0; k < K; ++k) c[k] = v.dot(d[k]);

    // Orient the axis so the treated group sits at least as high as the
    // control group; break exact ties toward a nonnegative first offset.
    double gap = 0.0;
    for (Group g : {Group::kTreated, Group::kControl}) {
      Vector w = model.group_weights(g);
      std::vector<int> idx = model.group_indices(g);
      double mean = 0.0;
      for (size_t i = 0; i < idx.size(); ++i) mean += w[i] * c[idx[i]];
      gap += (g == Group::kTreated) ? mean : -mean;
    }
    double tie = 1e-12 * spread;
    bool flip = gap < -tie;
    if (std::abs(gap) <= tie) {
      for (int k = 0; k < K; ++k) {
        if (std::abs(c[k]) > tie) {
          flip = c[k] < 0.0;
          break;
        }
      }
    }
    if (flip) {
      v = -v;
      c = -c;
    }
  }

  Vector u = Vector::Ones(p) / std::sqrt(static_cast<double>(p));
  Matrix H = Matrix::Identity(p, p);
  if (!degenerate && (v - u).norm() > 1e-12) {
    Vector w = (v - u).normalized();
    H -= 2.0 * (w * w.transpose());
  }

  Matrix W = L.triangularView<Eigen::Lower>().solve(Matrix::Identity(p, p));
  CanonicalMap map;
  map.linear = H * W;
  map.offset = -(map.linear * model.component(0).center);
  map.degenerate = degenerate;
  map.sigma2 = Vector(K);
  map.delta = c / std::sqrt(static_cast<double>(p));

  std::vector<Component> canon(model.components().begin(),
                               model.components().end());
  for (int k = 0; k < K; ++k) {
    Matrix white = W * model.component(k).covariance * W.transpose();
    map.sigma2[k] = white.trace() / static_cast<double>(p);
    canon[k].center = Vector::Constant(p, map.delta[k]);
    canon[k].covariance = map.sigma2[k] * Matrix::Identity(p, p);
  }
  return {map, Model(p, std::move(canon))};
}

Matrix apply_affine(const Matrix& linear, const Vector& offset,
                    const Matrix& rows) {
  require_square(linear, "affine linear part");
  if (offset.size() != linear.rows()) {
    throw DimensionError("affine offset size does not match the linear part");
  }
  if (rows.cols() != linear.cols()) {
    throw DimensionError("data row width does not match the affine map");
  }
  Eigen::FullPivLU<Matrix> lu(linear);
  if (!lu.isInvertible()) {
    throw ConfigError("affine linear part is singular");
  }
  return (rows * linear.transpose()).rowwise() + offset.transpose();
}

std::pair<Vector, Matrix> population_group_moments(const Model& model,
                                                   Group g) {
  std::vector<int> idx = model.group_indices(g);
  Vector w = model.group_weights(g);
  Vector mean = Vector::Zero(model.dimension());
  for (size_t i = 0; i < idx.size(); ++i) {
    mean += w[i] * model.component(idx[i]).center;
  }
  Matrix cov = Matrix::Zero(model.dimension(), model.dimension());
  for (size_t i = 0; i < idx.size(); ++i) {
    const Component& c = model.component(idx[i]);
    Vector off = c.center - mean;
    cov += w[i] * (c.covariance + off * off.transpose());
  }
  return {mean, cov};
}

double center_spread(const Model& model) {
  check_structural(model);
  Matrix L = reference_factor(model);
  return pairwise_spread(whitened_offsets(model, L));
}

bool degenerate_discriminant(const Model& model) {
  return center_spread(model) < kDegenerateSpread;
}

Direction population_discriminant(const Model& model) {
  auto [map, canon] = canonicalize(model);
  (void)canon;
  if (map.degenerate) return Direction::zero(model.dimension());
  Vector u = Vector::Ones(model.dimension()) /
             std::sqrt(static_cast<double>(model.dimension()));
  return map.pullback(Direction::unit(u));
}

}  // namespace dmpes
