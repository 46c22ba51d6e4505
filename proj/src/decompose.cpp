#include "dmpes/decompose.hpp"

#include <cmath>

namespace dmpes {

double project_z(const Vector& x, bool degenerate) {
  if (degenerate) return 0.0;
  return x.sum() / std::sqrt(static_cast<double>(x.size()));
}

DirectionSplit decompose_direction(const Direction& y, const Direction& z) {
  if (y.dim() != z.dim()) {
    throw DimensionError("directions live in different dimensions");
  }
  DirectionSplit split;
  split.along = z;
  if (z.is_zero()) {
    split.rho = 0.0;
    split.across = y;
    return split;
  }
  split.rho = y.coefficients().dot(z.coefficients());
  Vector resid = y.coefficients() - split.rho * z.coefficients();
  double n = resid.norm();
  if (n < 1e-12) {
    split.across = Direction::zero(y.dim());
  } else {
    split.across = Direction::unit(resid);
  }
  return split;
}

StructureFit fit_exchangeable(const Matrix& m) {
  require_square(m, "exchangeable fit input");
  const double p = static_cast<double>(m.rows());
  if ((m - m.transpose()).norm() > 1e-9 * (1.0 + m.norm())) {
    throw ConfigError("exchangeable fit input must be symmetric");
  }
  StructureFit fit;
  if (m.rows() == 1) {
    fit.scale = m(0, 0);
    fit.raw_coefficient = 0.0;
    fit.coefficient = 0.0;
    fit.residual = 0.0;
    if (!(fit.scale > 0.0)) {
      throw ConditioningError("exchangeable fit has nonpositive scale");
    }
    return fit;
  }
  // Least squares over scale*(I + c*ones*ones') reduces to the mean
  // diagonal minus the mean off-diagonal entry.
  double diag_mean = m.trace() / p;
  double off_mean = (m.sum() - m.trace()) / (p * p - p);
  fit.scale = diag_mean - off_mean;
  if (!(fit.scale > 0.0)) {
    throw ConditioningError("exchangeable fit has nonpositive scale");
  }
  fit.coefficient = off_mean / fit.scale;
  fit.raw_coefficient = fit.coefficient;
  fit.floor_violated = fit.coefficient < -1.0 / p;
  Matrix fitted =
      fit.scale * (Matrix::Identity(m.rows(), m.cols()) +
                   fit.coefficient * Matrix::Ones(m.rows(), m.cols()));
  double base = m.norm();
  fit.residual = base > 0.0 ? (m - fitted).norm() / base : 0.0;
  return fit;
}

GroupMoments selected_moments(const Matrix& rows,
                              const std::vector<int>& labels,
                              const std::vector<int>& selected) {
  GroupMoments gm;
  gm.count = static_cast<int>(selected.size());
  const Eigen::Index p = rows.cols();
  Matrix picked(gm.count, p);
  for (int i = 0; i < gm.count; ++i) picked.row(i) = rows.row(selected[i]);
  gm.mean = gm.count > 0 ? Vector(picked.colwise().mean())
                         : Vector(Vector::Zero(p));
  if (gm.count >= 2) {
    Matrix centered = picked.rowwise() - gm.mean.transpose();
    gm.covariance =
        (centered.transpose() * centered) / static_cast<double>(gm.count - 1);
  }
  if (!labels.empty()) {
    std::map<int, std::vector<int>> by_label;
    for (int i = 0; i < gm.count; ++i) {
      by_label[labels[selected[i]]].push_back(i);
    }
    for (auto& [label, members] : by_label) {
      Matrix sub(members.size(), p);
      for (size_t i = 0; i < members.size(); ++i) {
        sub.row(i) = picked.row(members[i]);
      }
      gm.component_count[label] = static_cast<int>(members.size());
      gm.component_mean[label] = sub.colwise().mean();
      if (members.size() >= 2) {
        Matrix centered = sub.rowwise() - sub.colwise().mean();
        gm.component_covariance[label] =
            (centered.transpose() * centered) /
            static_cast<double>(members.size() - 1);
      }
    }
  }
  return gm;
}

MomentSummary matched_moments(const Sample& sample, const MatchResult& match) {
  MomentSummary summary;
  summary.treated = selected_moments(sample.treated, sample.treated_component,
                                     match.treated_rows);
  summary.control = selected_moments(sample.control, sample.control_component,
                                     match.control_rows);
  return summary;
}

PbrResult percent_bias_reduction(const GapEstimate& matched,
                                 const GapEstimate& random,
                                 double se_multiplier) {
  PbrResult out;
  if (std::abs(random.estimate) <= se_multiplier * random.se) {
    out.degenerate = true;
    return out;
  }
  out.value = 100.0 * (1.0 - matched.estimate / random.estimate);
  double r2 = random.estimate * random.estimate;
  out.se = 100.0 * std::sqrt(matched.se * matched.se / r2 +
                             matched.estimate * matched.estimate *
                                 random.se * random.se / (r2 * r2));
  return out;
}

namespace {

VarianceRatioResult ratio_identity(double my, double ry, double mz, double rz,
                                   double mw, double rw, double rho) {
  double r2 = rho * rho;
  if (r2 > 1.0) throw ConfigError("rho must lie in [-1, 1]");
  if (!(ry > 0.0)) {
    throw ConditioningError("zero variance in the random baseline");
  }
  VarianceRatioResult out;
  out.observed = my / ry;
  if (r2 > 0.0) {
    if (!(rz > 0.0)) {
      throw ConditioningError("zero discriminant variance in the baseline");
    }
    out.z_ratio = mz / rz;
  }
  if (r2 < 1.0) {
    if (!(rw > 0.0)) {
      throw ConditioningError("zero orthogonal variance in the baseline");
    }
    out.w_ratio = mw / rw;
  }
  out.predicted = r2 * out.z_ratio + (1.0 - r2) * out.w_ratio;
  return out;
}

}  // namespace

VarianceRatioResult variance_ratio_decomposition(double var_matched_y,
                                                 double var_random_y,
                                                 double var_matched_z,
                                                 double var_random_z,
                                                 double var_matched_w,
                                                 double var_random_w,
                                                 double rho) {
  return ratio_identity(var_matched_y, var_random_y, var_matched_z,
                        var_random_z, var_matched_w, var_random_w, rho);
}

VarianceRatioResult component_variance_ratios(double disp_matched_y,
                                              double disp_random_y,
                                              double disp_matched_z,
                                              double disp_random_z,
                                              double disp_matched_w,
                                              double disp_random_w,
                                              double rho) {
  return ratio_identity(disp_matched_y, disp_random_y, disp_matched_z,
                        disp_random_z, disp_matched_w, disp_random_w, rho);
}

}  // namespace dmpes
