#pragma once

#include <map>
#include <optional>

#include "dmpes/matchers.hpp"

namespace dmpes {

/// Discriminant score of one canonical-coordinate point: the mean of its
/// coordinates times sqrt(p), or zero for a degenerate discriminant.
double project_z(const Vector& x, bool degenerate = false);

/// Split of a unit direction into its component along a reference direction
/// and the orthogonal rest, both unit or zero.
struct DirectionSplit {
  double rho = 0.0;   // cosine with the reference direction
  Direction along;    // the reference direction itself, or zero
  Direction across;   // unit orthogonal part, or zero when |rho| is one
};

/// Writes y = rho * z + sqrt(1 - rho^2) * w with w orthogonal to z. With a
/// zero reference every direction is entirely "across".
DirectionSplit decompose_direction(const Direction& y, const Direction& z);

/// Least-squares fit of a symmetric matrix by scale * (I + coefficient *
/// ones*ones'). A coefficient below the -1/p positivity floor is reported
/// as fitted but flagged.
struct StructureFit {
  double scale = 0.0;
  double coefficient = 0.0;
  double raw_coefficient = 0.0;
  double residual = 0.0;  // Frobenius, relative to the input norm
  bool floor_violated = false;
};

StructureFit fit_exchangeable(const Matrix& m);

/// Per-group moments of selected rows, with per-component breakdowns.
/// Covariances need at least two units and are empty otherwise.
struct GroupMoments {
  int count = 0;
  Vector mean;
  std::optional<Matrix> covariance;
  std::map<int, int> component_count;
  std::map<int, Vector> component_mean;
  std::map<int, Matrix> component_covariance;
};

struct MomentSummary {
  GroupMoments treated;
  GroupMoments control;
};

/// Moments of the units a match selected, computed on the sample's
/// coordinates as stored.
MomentSummary matched_moments(const Sample& sample, const MatchResult& match);
GroupMoments selected_moments(const Matrix& rows,
                              const std::vector<int>& labels,
                              const std::vector<int>& selected);

/// Mean and standard error of the mean across replications.
struct GapEstimate {
  double estimate = 0.0;
  double se = 0.0;
};

/// Percent bias reduction of matching relative to random subsampling along
/// one direction, with the degenerate verdict when the initial bias is
/// statistically indistinguishable from zero.
struct PbrResult {
  double value = 0.0;  // percent
  double se = 0.0;
  bool degenerate = false;
};

PbrResult percent_bias_reduction(const GapEstimate& matched,
                                 const GapEstimate& random,
                                 double se_multiplier);

/// The two sides of the variance-ratio identity along one direction:
/// observed ratio of matched to random mean-gap variance, against the
/// mixture of the discriminant and orthogonal ratios weighted by rho^2.
struct VarianceRatioResult {
  double observed = 0.0;
  double predicted = 0.0;
  double z_ratio = 0.0;
  double w_ratio = 0.0;
};

VarianceRatioResult variance_ratio_decomposition(double var_matched_y,
                                                 double var_random_y,
                                                 double var_matched_z,
                                                 double var_random_z,
                                                 double var_matched_w,
                                                 double var_random_w,
                                                 double rho);

/// Same identity for expected within-group sample variances of one
/// component along one direction.
VarianceRatioResult component_variance_ratios(double disp_matched_y,
                                              double disp_random_y,
                                              double disp_matched_z,
                                              double disp_random_z,
                                              double disp_matched_w,
                                              double disp_random_w,
                                              double rho);

}  // namespace dmpes
