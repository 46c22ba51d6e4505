#pragma once

#include <utility>
#include <vector>

#include "dmpes/matchers.hpp"
#include "dmpes/sampler.hpp"

namespace dmpes {

/// One mixture component of a conditional model: a discrete law over the
/// shared special support plus an ellipsoidal law for the remainder around a
/// component center shifted by the common regression on the specials.
struct ConditionalComponent {
  Vector special_probs;        // over support rows, sums to one
  Vector conditional_center;   // remainder center at special value zero
  Matrix conditional_covariance;
  RadialLaw radial;
  double weight = 1.0;
  Group group = Group::kControl;
};

/// Mixture where a subset of covariates (the specials) is discrete and
/// arbitrary while the remainder is ellipsoidal given the specials, with a
/// regression slope shared by every component and proportional conditional
/// covariances.
class ConditionalModel {
 public:
  ConditionalModel(Eigen::Index dimension, std::vector<int> special_columns,
                   Matrix support, Matrix regression,
                   std::vector<ConditionalComponent> components);

  Eigen::Index dimension() const { return dimension_; }
  Eigen::Index special_dim() const {
    return static_cast<Eigen::Index>(special_columns_.size());
  }
  Eigen::Index remainder_dim() const { return dimension_ - special_dim(); }
  const std::vector<int>& special_columns() const { return special_columns_; }
  std::vector<int> remainder_columns() const;
  const Matrix& support() const { return support_; }
  const Matrix& regression() const { return regression_; }
  int component_count() const { return static_cast<int>(components_.size()); }
  const std::vector<ConditionalComponent>& components() const {
    return components_;
  }
  const ConditionalComponent& component(int k) const {
    return components_.at(k);
  }

  /// The mixture of conditional remainder laws, ignoring the specials and
  /// the regression shift. Its structure determines the subspace geometry.
  Model remainder_model() const;

 private:
  Eigen::Index dimension_;
  std::vector<int> special_columns_;
  Matrix support_;
  Matrix regression_;
  std::vector<ConditionalComponent> components_;
};

/// Structural checks for the conditional mixture: proportional conditional
/// covariances and collinear conditional discriminants.
ValidationReport validate(const ConditionalModel& model);
void require_valid(const ConditionalModel& model);

/// Canonical form acting on the remainder block only: the returned map
/// takes regression residuals of the remainder block to canonical
/// coordinates, and the returned model has special columns first, the same
/// support, a zero regression (it is absorbed into the residuals), and a
/// canonical remainder mixture.
std::pair<CanonicalMap, ConditionalModel> conditional_canonicalize(
    const ConditionalModel& model);

/// Draws a panel from the conditional model; specials occupy their
/// configured columns. Deterministic in (master_seed, replication).
Sample draw_conditional_panel(const ConditionalModel& model, int n_treated,
                              int n_control, const AllocationRule& rule,
                              std::uint64_t master_seed,
                              std::uint64_t replication);

/// Replaces remainder columns by residuals from the pooled within-group
/// regression of remainder on specials. Returns the residualized sample
/// and the fitted slope (remainder dim x special dim). With no special
/// columns this is the identity and the slope is empty.
std::pair<Sample, Matrix> residualize_remainder(
    const Sample& sample, const std::vector<int>& special_columns);

/// Split of a unit direction, in coordinates that list specials first and
/// canonical remainder coordinates after, into its projection onto the span
/// of the specials and the remainder discriminant, and the orthogonal rest.
struct ScriptDecomposition {
  double rho = 0.0;   // norm of the projected part
  Vector psi;         // unit projected part, or zero when rho vanishes
  Vector gamma;       // unit orthogonal part, or zero when rho is one
  bool degenerate_span = false;  // rho ~ 0
  bool degenerate_rest = false;  // rho ~ 1
};

/// Decomposes `direction` against the subspace spanned by the first
/// `special_dim` coordinates and the remainder diagonal. When the remainder
/// discriminant is degenerate the subspace shrinks to the specials alone.
ScriptDecomposition script_decompose(const Direction& direction,
                                     Eigen::Index special_dim,
                                     bool remainder_degenerate);

/// Same, reading the split and the degeneracy off a canonical conditional
/// model.
ScriptDecomposition script_decompose(const Direction& direction,
                                     const ConditionalModel& model);

/// Least-squares fit of a symmetric matrix over blocks (specials first,
/// remainder after): the special block is free, the cross block is an outer
/// product of a coefficient per special with the remainder diagonal, and
/// the remainder block is exchangeable.
struct BlockStructureFit {
  Matrix special_block;
  Vector cross_coefficients;
  double cross_residual = 0.0;     // Frobenius, absolute
  double remainder_scale = 0.0;
  double remainder_coefficient = 0.0;
  double remainder_residual = 0.0;  // Frobenius, absolute
  double total_residual = 0.0;      // cross and remainder residual combined
};

BlockStructureFit fit_block_structure(const Matrix& m, Eigen::Index special_dim);

}  // namespace dmpes
