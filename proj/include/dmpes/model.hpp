#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "dmpes/types.hpp"

namespace dmpes {

enum class Group { kTreated, kControl };

inline const char* group_name(Group g) {
  return g == Group::kTreated ? "treated" : "control";
}

/// Radial law of an ellipsoidally symmetric component. Every law is scaled so
/// the component covariance equals the configured matrix exactly.
struct RadialLaw {
  enum class Kind { kNormal, kStudentT, kUniformBall };
  Kind kind = Kind::kNormal;
  double degrees_of_freedom = 0.0;  // student-t only, must exceed 2
};

struct Component {
  Vector center;
  Matrix covariance;
  RadialLaw radial;
  double weight = 1.0;
  Group group = Group::kControl;
};

/// Finite mixture of ellipsoidal components split into a treated and a
/// control group. Construction checks shapes, weights and radial parameters;
/// the distributional structure (proportional covariances, collinear
/// discriminants) is checked separately by validate().
class Model {
 public:
  Model(Eigen::Index dimension, std::vector<Component> components);

  Eigen::Index dimension() const { return dimension_; }
  int component_count() const { return static_cast<int>(components_.size()); }
  const std::vector<Component>& components() const { return components_; }
  const Component& component(int k) const { return components_.at(k); }

  std::vector<int> group_indices(Group g) const;
  /// Mixture weights renormalized to sum to one within the group.
  Vector group_weights(Group g) const;

 private:
  Eigen::Index dimension_ = 0;
  std::vector<Component> components_;
};

struct Violation {
  std::string condition;
  std::string detail;
  double residual = 0.0;
};

struct ValidationReport {
  std::vector<Violation> violations;
  /// Best least-squares scalar relating each covariance to the first one.
  Vector covariance_ratios;
  /// Absolute cosine between each pairwise discriminant and the reference
  /// one; 1 where either discriminant is undefined.
  Matrix discriminant_cosines;
  bool ok() const { return violations.empty(); }
  std::string summary() const;
};

/// Relative tolerance for covariance proportionality and discriminant
/// collinearity checks.
inline constexpr double kStructureTol = 1e-8;
/// Absolute threshold below which the center spread counts as zero and the
/// discriminant degenerates to the zero direction.
inline constexpr double kDegenerateSpread = 1e-10;
/// Condition number ceiling for matrix factorizations.
inline constexpr double kConditionLimit = 1e12;

/// Checks proportional covariances and collinear pairwise discriminants.
/// Throws ValidationError on structurally broken input (asymmetric or
/// non-positive-definite covariance) since the checks are meaningless there.
ValidationReport validate(const Model& model);

/// Throws ValidationError unless validate() returns an empty report.
void require_valid(const Model& model);

/// Invertible affine change of covariates together with the canonical
/// parameters it produces. Canonical coordinates have the reference
/// component spherical with unit scale and centered at the origin, and all
/// centers on the diagonal ray through (1,...,1)/sqrt(p).
struct CanonicalMap {
  Matrix linear;
  Vector offset;
  Vector sigma2;  // canonical component scales
  Vector delta;   // canonical center positions along the diagonal ray
  bool degenerate = false;

  Vector apply(const Vector& x) const { return linear * x + offset; }
  Matrix apply_rows(const Matrix& rows) const;
  Vector invert(const Vector& y) const;
  /// Direction whose scores on original data equal scores of `canonical` on
  /// mapped data up to positive scale.
  Direction pullback(const Direction& canonical) const;
};

/// Computes the canonical form of a valid model. The returned model has
/// covariance sigma2[k] * I and center delta[k] * (1,...,1) for each
/// component; applying the map to the original component moments reproduces
/// the canonical ones.
std::pair<CanonicalMap, Model> canonicalize(const Model& model);

/// Applies x -> linear x + offset to every row of `rows`.
Matrix apply_affine(const Matrix& linear, const Vector& offset,
                    const Matrix& rows);

/// Mixture mean and covariance of one group, using renormalized weights.
std::pair<Vector, Matrix> population_group_moments(const Model& model,
                                                   Group g);

/// Largest pairwise center separation in the metric of the reference
/// covariance. Zero spread means the discriminant is degenerate.
double center_spread(const Model& model);

/// True when all component centers coincide up to kDegenerateSpread.
bool degenerate_discriminant(const Model& model);

/// Unit direction along which the groups separate, oriented so the treated
/// group scores at least as high as the control group; the zero direction
/// when the centers coincide.
Direction population_discriminant(const Model& model);

}  // namespace dmpes
