#include "dmpes/conditional.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>

#include "dmpes/decompose.hpp"

namespace dmpes {

namespace {

void check_columns(Eigen::Index dimension, const std::vector<int>& cols) {
  if (cols.empty()) return;
  std::vector<int> sorted = cols;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ConfigError("special columns must be distinct");
  }
  if (sorted.front() < 0 || sorted.back() >= dimension) {
    throw ConfigError("special column out of range");
  }
}

}  // namespace

ConditionalModel::ConditionalModel(Eigen::Index dimension,
                                   std::vector<int> special_columns,
                                   Matrix support, Matrix regression,
                                   std::vector<ConditionalComponent> components)
    : dimension_(dimension),
      special_columns_(std::move(special_columns)),
      support_(std::move(support)),
      regression_(std::move(regression)),
      components_(std::move(components)) {
  if (dimension_ < 1) throw ConfigError("dimension must be at least 1");
  check_columns(dimension_, special_columns_);
  const Eigen::Index s = special_dim();
  const Eigen::Index r = remainder_dim();
  if (s < 1) throw ConfigError("conditional model needs special columns");
  if (r < 1) throw ConfigError("conditional model needs remainder columns");
  if (support_.cols() != s) {
    throw DimensionError("support width must match the special columns");
  }
  if (support_.rows() < 1) throw ConfigError("support must be nonempty");
  for (Eigen::Index i = 0; i < support_.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < support_.rows(); ++j) {
      if (support_.row(i) == support_.row(j)) {
        throw ConfigError("support rows must be distinct");
      }
    }
  }
  if (regression_.rows() != r || regression_.cols() != s) {
    throw DimensionError("regression must map specials to the remainder");
  }
  for (size_t k = 0; k < components_.size(); ++k) {
    ConditionalComponent& c = components_[k];
    if (c.special_probs.size() != support_.rows()) {
      throw DimensionError("component " + std::to_string(k) +
                           " needs one probability per support row");
    }
    if (c.special_probs.minCoeff() < 0.0 || !(c.special_probs.sum() > 0.0)) {
      throw ConfigError("component " + std::to_string(k) +
                        " has invalid special probabilities");
    }
    c.special_probs /= c.special_probs.sum();
  }
  remainder_model();  // runs the structural shape checks
}

std::vector<int> ConditionalModel::remainder_columns() const {
  std::vector<int> sorted = special_columns_;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> out;
  for (int j = 0; j < dimension_; ++j) {
    if (!std::binary_search(sorted.begin(), sorted.end(), j)) {
      out.push_back(j);
    }
  }
  return out;
}

Model ConditionalModel::remainder_model() const {
  std::vector<Component> comps;
  comps.reserve(components_.size());
  for (const ConditionalComponent& c : components_) {
    comps.push_back({c.conditional_center, c.conditional_covariance, c.radial,
                     c.weight, c.group});
  }
  return Model(remainder_dim(), std::move(comps));
}

ValidationReport validate(const ConditionalModel& model) {
  return validate(model.remainder_model());
}

void require_valid(const ConditionalModel& model) {
  require_valid(model.remainder_model());
}

std::pair<CanonicalMap, ConditionalModel> conditional_canonicalize(
    const ConditionalModel& model) {
  auto [map, canon] = canonicalize(model.remainder_model());
  const Eigen::Index s = model.special_dim();
  std::vector<int> canon_cols(s);
  for (Eigen::Index j = 0; j < s; ++j) canon_cols[j] = static_cast<int>(j);
  std::vector<ConditionalComponent> comps = model.components();
  for (int k = 0; k < model.component_count(); ++k) {
    comps[k].conditional_center = canon.component(k).center;
    comps[k].conditional_covariance = canon.component(k).covariance;
  }
  // Canonical coordinates absorb the regression: data maps into them via
  // x_r -> linear * (x_r - regression * x_s) + offset, so the canonical
  // model's own regression is zero.
  ConditionalModel out(model.dimension(), std::move(canon_cols),
                       model.support(),
                       Matrix::Zero(model.remainder_dim(), s),
                       std::move(comps));
  return {map, std::move(out)};
}

namespace {

void draw_conditional_group(const ConditionalModel& model, Group g, int total,
                            const AllocationRule& rule, std::uint64_t master,
                            std::uint64_t replication, Matrix& rows,
                            std::vector<int>& labels) {
  const std::uint64_t gtag = g == Group::kTreated ? 0 : 1;
  const Eigen::Index p = model.dimension();
  const Eigen::Index r = model.remainder_dim();
  const std::vector<int>& scol = model.special_columns();
  std::vector<int> rcol = model.remainder_columns();

  std::vector<int> idx;
  Vector weights;
  {
    std::vector<double> w;
    for (int k = 0; k < model.component_count(); ++k) {
      if (model.component(k).group == g) {
        idx.push_back(k);
        w.push_back(model.component(k).weight);
      }
    }
    weights = Eigen::Map<Vector>(w.data(), w.size());
    weights /= weights.sum();
  }
  Stream count_stream =
      Stream::keyed(master, {stream_tag::kCounts, replication, gtag});
  std::vector<int> counts =
      allocate_counts(idx, weights, model.component_count(), total, rule,
                      count_stream);

  rows.resize(total, p);
  labels.assign(total, -1);
  int at = 0;
  for (size_t i = 0; i < idx.size(); ++i) {
    const ConditionalComponent& comp = model.component(idx[i]);
    Stream stream = Stream::keyed(
        master, {stream_tag::kRows, replication, gtag,
                 static_cast<std::uint64_t>(idx[i])});
    Eigen::LLT<Matrix> llt(comp.conditional_covariance);
    if (llt.info() != Eigen::Success) {
      throw ConditioningError("conditional covariance is not factorable");
    }
    Matrix L = llt.matrixL();
    for (int n = 0; n < counts[i]; ++n) {
      // Inverse-CDF draw over the support keeps the stream portable.
      double u = stream.uniform();
      Eigen::Index pick = comp.special_probs.size() - 1;
      double acc = 0.0;
      for (Eigen::Index j = 0; j < comp.special_probs.size(); ++j) {
        acc += comp.special_probs[j];
        if (u <= acc) {
          pick = j;
          break;
        }
      }
      Vector xs = model.support().row(pick).transpose();
      Vector z = radial_pull(comp.radial, r, stream);
      Vector xr = comp.conditional_center + model.regression() * xs + L * z;
      for (size_t j = 0; j < scol.size(); ++j) rows(at, scol[j]) = xs[j];
      for (size_t j = 0; j < rcol.size(); ++j) rows(at, rcol[j]) = xr[j];
      labels[at] = idx[i];
      ++at;
    }
  }

  Stream shuffle_stream =
      Stream::keyed(master, {stream_tag::kShuffle, replication, gtag});
  std::vector<int> perm = shuffle_stream.permutation(total);
  Matrix shuffled(total, p);
  std::vector<int> shuffled_labels(total);
  for (int i = 0; i < total; ++i) {
    shuffled.row(i) = rows.row(perm[i]);
    shuffled_labels[i] = labels[perm[i]];
  }
  rows.swap(shuffled);
  labels.swap(shuffled_labels);
}

}  // namespace

Sample draw_conditional_panel(const ConditionalModel& model, int n_treated,
                              int n_control, const AllocationRule& rule,
                              std::uint64_t master_seed,
                              std::uint64_t replication) {
  if (n_treated < 1 || n_control < 1) {
    throw ConfigError("panel needs at least one unit in each group");
  }
  Sample sample;
  sample.master_seed = master_seed;
  sample.replication = replication;
  draw_conditional_group(model, Group::kTreated, n_treated, rule, master_seed,
                         replication, sample.treated,
                         sample.treated_component);
  draw_conditional_group(model, Group::kControl, n_control, rule, master_seed,
                         replication, sample.control,
                         sample.control_component);
  return sample;
}

std::pair<Sample, Matrix> residualize_remainder(
    const Sample& sample, const std::vector<int>& special_columns) {
  const Eigen::Index p = sample.dim();
  check_columns(p, special_columns);
  const Eigen::Index s = static_cast<Eigen::Index>(special_columns.size());
  if (s == 0) return {sample, Matrix(p, 0)};

  std::vector<int> sorted = special_columns;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> rcol;
  for (int j = 0; j < p; ++j) {
    if (!std::binary_search(sorted.begin(), sorted.end(), j)) {
      rcol.push_back(j);
    }
  }
  const Eigen::Index r = static_cast<Eigen::Index>(rcol.size());

  const int nt = sample.n_treated();
  const int nc = sample.n_control();
  Matrix specials(nt + nc, s), remainder(nt + nc, r);
  for (Eigen::Index j = 0; j < s; ++j) {
    specials.col(j).head(nt) = sample.treated.col(sorted[j]);
    specials.col(j).tail(nc) = sample.control.col(sorted[j]);
  }
  for (Eigen::Index j = 0; j < r; ++j) {
    remainder.col(j).head(nt) = sample.treated.col(rcol[j]);
    remainder.col(j).tail(nc) = sample.control.col(rcol[j]);
  }
  Matrix s_centered = specials;
  Matrix r_centered = remainder;
  s_centered.topRows(nt).rowwise() -=
      specials.topRows(nt).colwise().mean();
  s_centered.bottomRows(nc).rowwise() -=
      specials.bottomRows(nc).colwise().mean();
  r_centered.topRows(nt).rowwise() -=
      remainder.topRows(nt).colwise().mean();
  r_centered.bottomRows(nc).rowwise() -=
      remainder.bottomRows(nc).colwise().mean();

  // Constant special columns regress to a zero slope; collinearity among
  // the varying columns is an error.
  Eigen::Index varying = 0;
  for (Eigen::Index j = 0; j < s; ++j) {
    if (s_centered.col(j).norm() > 1e-12) ++varying;
  }
  auto cod = s_centered.completeOrthogonalDecomposition();
  if (cod.rank() < varying) {
    throw ConditioningError("special columns are collinear");
  }
  Matrix slope_t = cod.solve(r_centered);
  Matrix slope = slope_t.transpose();  // r x s

  Sample out = sample;
  for (int i = 0; i < nt; ++i) {
    Vector xs(s);
    for (Eigen::Index j = 0; j < s; ++j) xs[j] = sample.treated(i, sorted[j]);
    Vector fit = slope * xs;
    for (Eigen::Index j = 0; j < r; ++j) {
      out.treated(i, rcol[j]) = sample.treated(i, rcol[j]) - fit[j];
    }
  }
  for (int i = 0; i < nc; ++i) {
    Vector xs(s);
    for (Eigen::Index j = 0; j < s; ++j) xs[j] = sample.control(i, sorted[j]);
    Vector fit = slope * xs;
    for (Eigen::Index j = 0; j < r; ++j) {
      out.control(i, rcol[j]) = sample.control(i, rcol[j]) - fit[j];
    }
  }
  return {std::move(out), std::move(slope)};
}

ScriptDecomposition script_decompose(const Direction& direction,
                                     Eigen::Index special_dim,
                                     bool remainder_degenerate) {
  if (direction.is_zero()) {
    throw ConfigError("cannot decompose the zero direction");
  }
  const Eigen::Index p = direction.dim();
  if (special_dim < 0 || special_dim > p) {
    throw ConfigError("special dimension out of range");
  }
  const Eigen::Index r = p - special_dim;
  const Vector& y = direction.coefficients();

  Vector proj = Vector::Zero(p);
  proj.head(special_dim) = y.head(special_dim);
  if (r > 0 && !remainder_degenerate) {
    double a = y.tail(r).sum() / std::sqrt(static_cast<double>(r));
    proj.tail(r) =
        Vector::Constant(r, a / std::sqrt(static_cast<double>(r)));
  }
  ScriptDecomposition out;
  out.rho = proj.norm();
  Vector resid = y - proj;
  double rest = resid.norm();
  out.degenerate_span = out.rho < 1e-12;
  out.degenerate_rest = rest < 1e-12;
  out.psi = out.degenerate_span ? Vector(Vector::Zero(p)) : Vector(proj / out.rho);
  out.gamma = out.degenerate_rest ? Vector(Vector::Zero(p)) : Vector(resid / rest);
  return out;
}

ScriptDecomposition script_decompose(const Direction& direction,
                                     const ConditionalModel& model) {
  const Eigen::Index s = model.special_dim();
  for (Eigen::Index j = 0; j < s; ++j) {
    if (model.special_columns()[j] != j) {
      throw ConfigError(
          "subspace decomposition expects canonical conditional coordinates");
    }
  }
  return script_decompose(direction, s,
                          degenerate_discriminant(model.remainder_model()));
}

BlockStructureFit fit_block_structure(const Matrix& m,
                                      Eigen::Index special_dim) {
  require_square(m, "block structure fit input");
  if ((m - m.transpose()).norm() > 1e-9 * (1.0 + m.norm())) {
    throw ConfigError("block structure fit input must be symmetric");
  }
  const Eigen::Index p = m.rows();
  if (special_dim < 0 || special_dim > p) {
    throw ConfigError("special dimension out of range");
  }
  const Eigen::Index s = special_dim;
  const Eigen::Index r = p - s;

  BlockStructureFit fit;
  fit.special_block = m.topLeftCorner(s, s);
  fit.cross_coefficients = Vector::Zero(s);
  if (r > 0 && s > 0) {
    Matrix cross = m.topRightCorner(s, r);
    fit.cross_coefficients = cross.rowwise().mean();
    Matrix fitted = fit.cross_coefficients * Matrix::Ones(1, r);
    fit.cross_residual = (cross - fitted).norm();
  }
  if (r > 0) {
    Matrix block = m.bottomRightCorner(r, r);
    StructureFit ex = fit_exchangeable(block);
    fit.remainder_scale = ex.scale;
    fit.remainder_coefficient = ex.coefficient;
    fit.remainder_residual = ex.residual * block.norm();
  }
  fit.total_residual = std::sqrt(2.0 * fit.cross_residual *
                                     fit.cross_residual +
                                 fit.remainder_residual *
                                     fit.remainder_residual);
  return fit;
}

}  // namespace dmpes
