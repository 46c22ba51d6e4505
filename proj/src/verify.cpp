#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dmpes/harness.hpp"
#include "dmpes/model_io.hpp"

namespace dmpes {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) { return format_number(v); }

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return kNan;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return kNan;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double sub_mean(const Vector& v, const std::vector<int>& idx) {
  double s = 0.0;
  for (int i : idx) s += v[i];
  return s / static_cast<double>(idx.size());
}

double sub_var(const Vector& v, const std::vector<int>& idx) {
  if (idx.size() < 2) return kNan;
  const double m = sub_mean(v, idx);
  double s = 0.0;
  for (int i : idx) s += (v[i] - m) * (v[i] - m);
  return s / static_cast<double>(idx.size() - 1);
}

double masked_mean(const Vector& v, const std::vector<unsigned char>& ok,
                   const std::vector<int>& idx, int* n_out = nullptr) {
  double s = 0.0;
  int n = 0;
  for (int i : idx) {
    if (!ok[i]) continue;
    s += v[i];
    ++n;
  }
  if (n_out) *n_out = n;
  return n > 0 ? s / n : kNan;
}

// ---------------------------------------------------------------------------
// Extracted per-replication arrays.

struct CompData {
  std::vector<unsigned char> has_mean;
  std::vector<unsigned char> has_cov;
  Matrix means;              // R x p, rows meaningful where has_mean
  std::vector<Matrix> covs;  // empty where !has_cov
};

struct DesignData {
  Matrix mean_t, mean_c, gap;  // R x p
  std::vector<Matrix> cov_t, cov_c;
  bool have_covs = true;
  std::map<int, CompData> comps;
};

struct DirCache {
  std::vector<Vector> gap;      // per design, length R
  std::vector<Vector> quad_t;   // y' S_t y per design
  std::vector<Vector> quad_c;
  std::vector<std::map<int, Vector>> comp_quad;
};

struct SplitInfo {
  double rho = 0.0;
  int along_cache = -1;
  int across_cache = -1;
};

struct Ctx {
  const ReplicationStats& s;
  double mult = 3.0;
  double exact = 1e-10;
  Eigen::Index p = 0, sdim = 0, rdim = 0;
  int R = 0;
  std::vector<int> full;
  std::vector<const ReplicationRecord*> rows;
  std::vector<DesignData> designs;
  int primary = 0;
  int random_design = 0;
  std::vector<std::vector<int>> boot;

  std::vector<Vector> cache_dirs;
  std::vector<DirCache> cache;
  std::vector<int> probe_cache;  // per stats direction, -1 for zero probes
  std::vector<SplitInfo> split;
  std::vector<int> rand_idx, orth_idx;
  int z_idx = -1;
};

int add_cache_dir(Ctx& ctx, const Vector& v) {
  ctx.cache_dirs.push_back(v);
  return static_cast<int>(ctx.cache_dirs.size()) - 1;
}

void fill_caches(Ctx& ctx) {
  const int designs = static_cast<int>(ctx.designs.size());
  ctx.cache.assign(ctx.cache_dirs.size(), DirCache{});
  for (std::size_t c = 0; c < ctx.cache_dirs.size(); ++c) {
    const Vector& y = ctx.cache_dirs[c];
    DirCache& dc = ctx.cache[c];
    dc.gap.resize(designs);
    dc.quad_t.resize(designs);
    dc.quad_c.resize(designs);
    dc.comp_quad.resize(designs);
    for (int d = 0; d < designs; ++d) {
      const DesignData& dd = ctx.designs[d];
      dc.gap[d] = dd.gap * y;
      Vector qt = Vector::Zero(ctx.R);
      Vector qc = Vector::Zero(ctx.R);
      if (dd.have_covs) {
        for (int i = 0; i < ctx.R; ++i) {
          qt[i] = y.dot(dd.cov_t[i] * y);
          qc[i] = y.dot(dd.cov_c[i] * y);
        }
      }
      dc.quad_t[d] = std::move(qt);
      dc.quad_c[d] = std::move(qc);
      for (const auto& [k, comp] : dd.comps) {
        Vector q = Vector::Zero(ctx.R);
        for (int i = 0; i < ctx.R; ++i) {
          if (comp.has_cov[i]) q[i] = y.dot(comp.covs[i] * y);
        }
        dc.comp_quad[d][k] = std::move(q);
      }
    }
  }
}

Ctx build_ctx(const ReplicationStats& stats) {
  Ctx ctx{stats};
  ctx.mult = stats.config.tolerance.se_multiplier;
  ctx.exact = stats.config.tolerance.exact_tol;
  ctx.p = stats.dim;
  ctx.sdim = stats.special_dim;
  ctx.rdim = ctx.p - ctx.sdim;

  for (const ReplicationRecord& row : stats.rows) {
    if (!row.excluded) ctx.rows.push_back(&row);
  }
  ctx.R = static_cast<int>(ctx.rows.size());
  if (ctx.R < 8) throw ConfigError("too few usable replications to verify");
  ctx.full.resize(ctx.R);
  for (int i = 0; i < ctx.R; ++i) ctx.full[i] = i;

  const int designs = static_cast<int>(stats.design_names.size());
  ctx.primary = 0;
  ctx.random_design = designs - 1;

  ctx.designs.resize(designs);
  for (int d = 0; d < designs; ++d) {
    DesignData& dd = ctx.designs[d];
    dd.mean_t.resize(ctx.R, ctx.p);
    dd.mean_c.resize(ctx.R, ctx.p);
    dd.gap.resize(ctx.R, ctx.p);
    dd.cov_t.resize(ctx.R);
    dd.cov_c.resize(ctx.R);
    for (int i = 0; i < ctx.R; ++i) {
      const MomentSummary& ms = ctx.rows[i]->designs.at(d);
      dd.mean_t.row(i) = ms.treated.mean.transpose();
      dd.mean_c.row(i) = ms.control.mean.transpose();
      dd.gap.row(i) = (ms.treated.mean - ms.control.mean).transpose();
      if (ms.treated.covariance && ms.control.covariance) {
        dd.cov_t[i] = *ms.treated.covariance;
        dd.cov_c[i] = *ms.control.covariance;
      } else {
        dd.have_covs = false;
        dd.cov_t[i] = Matrix::Zero(ctx.p, ctx.p);
        dd.cov_c[i] = Matrix::Zero(ctx.p, ctx.p);
      }
    }
    auto load_comp = [&](int k, bool treated_side) {
      CompData cd;
      cd.has_mean.assign(ctx.R, 0);
      cd.has_cov.assign(ctx.R, 0);
      cd.means = Matrix::Zero(ctx.R, ctx.p);
      cd.covs.resize(ctx.R);
      for (int i = 0; i < ctx.R; ++i) {
        const MomentSummary& ms = ctx.rows[i]->designs.at(d);
        const GroupMoments& gm = treated_side ? ms.treated : ms.control;
        auto im = gm.component_mean.find(k);
        if (im != gm.component_mean.end()) {
          cd.has_mean[i] = 1;
          cd.means.row(i) = im->second.transpose();
        }
        auto ic = gm.component_covariance.find(k);
        if (ic != gm.component_covariance.end()) {
          cd.has_cov[i] = 1;
          cd.covs[i] = ic->second;
        }
      }
      dd.comps.emplace(k, std::move(cd));
    };
    for (int k : stats.treated_components) load_comp(k, true);
    for (int k : stats.control_components) load_comp(k, false);
  }

  const int B = stats.config.tolerance.bootstrap_resamples;
  Stream bs = Stream::keyed(stats.config.seed, {stream_tag::kBootstrap});
  ctx.boot.resize(B);
  for (int b = 0; b < B; ++b) {
    ctx.boot[b].resize(ctx.R);
    for (int i = 0; i < ctx.R; ++i) {
      ctx.boot[b][i] = static_cast<int>(bs.below(ctx.R));
    }
  }

  int z_cache = -1;
  if (ctx.sdim == 0 && !stats.degenerate_z) {
    z_cache = add_cache_dir(ctx, Vector::Ones(ctx.p) / std::sqrt(double(ctx.p)));
  }
  ctx.split.resize(stats.directions.size());
  for (std::size_t j = 0; j < stats.directions.size(); ++j) {
    const Direction& dir = stats.directions[j];
    const std::string& id = stats.direction_ids[j];
    if (id == "z") {
      ctx.z_idx = static_cast<int>(j);
    } else if (id.rfind("rand", 0) == 0) {
      ctx.rand_idx.push_back(static_cast<int>(j));
    } else {
      ctx.orth_idx.push_back(static_cast<int>(j));
    }
    ctx.probe_cache.push_back(dir.is_zero()
                                  ? -1
                                  : add_cache_dir(ctx, dir.coefficients()));
    if (dir.is_zero()) continue;
    SplitInfo& si = ctx.split[j];
    if (ctx.sdim == 0) {
      const Direction z = stats.degenerate_z
                              ? Direction::zero(ctx.p)
                              : Direction::unit(Vector::Ones(ctx.p));
      const DirectionSplit sp = decompose_direction(dir, z);
      si.rho = sp.rho;
      if (sp.rho != 0.0 && !sp.along.is_zero()) si.along_cache = z_cache;
      if (!sp.across.is_zero()) {
        si.across_cache = add_cache_dir(ctx, sp.across.coefficients());
      }
    } else {
      const ScriptDecomposition sd =
          script_decompose(dir, ctx.sdim, stats.degenerate_z);
      si.rho = sd.rho;
      if (!sd.degenerate_span && sd.psi.size() == ctx.p) {
        si.along_cache = add_cache_dir(ctx, sd.psi);
      }
      if (!sd.degenerate_rest && sd.gamma.size() == ctx.p &&
          sd.gamma.norm() > 0.5) {
        si.across_cache = add_cache_dir(ctx, sd.gamma);
      }
    }
  }
  fill_caches(ctx);
  return ctx;
}

// ---------------------------------------------------------------------------
// Tolerance bookkeeping.

struct MaxStd {
  double stat = -1.0;
  double value = 0.0;
  double se = 0.0;
  std::string label;
  int checked = 0;
};

void consider(MaxStd& mx, double value, double se, const std::string& label,
              double exact_tol) {
  ++mx.checked;
  double stat;
  if (!std::isfinite(value)) {
    stat = kInf;
  } else if (std::abs(value) <= exact_tol) {
    stat = 0.0;
  } else if (!std::isfinite(se) || se <= 0.0) {
    stat = kInf;
  } else {
    stat = std::abs(value) / se;
  }
  if (stat > mx.stat) {
    mx.stat = stat;
    mx.value = value;
    mx.se = se;
    mx.label = label;
  }
}

Claim claim_from(const Ctx& ctx, const std::string& id, const MaxStd& mx,
                 const std::string& what) {
  Claim c;
  c.id = id;
  if (mx.checked == 0) {
    c.verdict = Verdict::kDegenerate;
    c.notes = "nothing to compare";
    return c;
  }
  c.estimate = mx.value;
  c.se = std::isfinite(mx.se) ? mx.se : 0.0;
  c.reference = ctx.mult * c.se;
  const bool ok = mx.stat <= ctx.mult;
  c.verdict = ok ? Verdict::kPass : Verdict::kFail;
  c.notes = "largest " + what + ": " + fmt(mx.value) + " (se " + fmt(mx.se) +
            ", " + std::to_string(mx.checked) + " comparisons, worst at " +
            mx.label + ")";
  return c;
}

Claim degenerate_claim(const std::string& id, const std::string& note) {
  Claim c;
  c.id = id;
  c.verdict = Verdict::kDegenerate;
  c.notes = note;
  return c;
}

template <class F>
double boot_se(const Ctx& ctx, F&& f) {
  std::vector<double> vals;
  vals.reserve(ctx.boot.size());
  int skipped = 0;
  for (const std::vector<int>& idx : ctx.boot) {
    const double v = f(idx);
    if (std::isfinite(v)) {
      vals.push_back(v);
    } else {
      ++skipped;
    }
  }
  if (vals.size() < 2 || skipped * 2 > static_cast<int>(ctx.boot.size())) {
    return kNan;
  }
  return sd_of(vals);
}

// ---------------------------------------------------------------------------
// Matrix-shaped statistics with bootstrap noise floors.

Matrix rows_cov(const Matrix& rows, const std::vector<int>& idx) {
  const Eigen::Index p = rows.cols();
  const double n = static_cast<double>(idx.size());
  Vector m = Vector::Zero(p);
  for (int i : idx) m += rows.row(i).transpose();
  m /= n;
  Matrix c = Matrix::Zero(p, p);
  for (int i : idx) {
    const Vector v = rows.row(i).transpose() - m;
    c += v * v.transpose();
  }
  return c / (n - 1.0);
}

using MatrixGen =
    std::function<std::optional<Matrix>(const std::vector<int>&)>;

/// Deviation of a fitted structure from a matrix statistic, compared to a
/// noise floor assembled from bootstrap entrywise variances of the same
/// deviation. `deviation` maps a matrix to the entries the fit cannot
/// explain (returning an empty optional when the fit degenerates).
struct FitRecord {
  bool evaluated = false;
  bool pass = false;
  double estimate = 0.0;   // residual norm relative to the statistic norm
  double reference = 0.0;  // floor on the same scale
  double se = 0.0;
  std::string note;
};

using DeviationFn = std::function<std::optional<Matrix>(const Matrix&)>;

FitRecord deviation_record(const Ctx& ctx, const MatrixGen& gen,
                           const DeviationFn& deviation,
                           const std::string& label) {
  FitRecord rec;
  const std::optional<Matrix> base = gen(ctx.full);
  if (!base) {
    rec.note = label + ": statistic unavailable";
    return rec;
  }
  const std::optional<Matrix> dev = deviation(*base);
  if (!dev) {
    rec.note = label + ": structure fit degenerated";
    return rec;
  }
  const double T = dev->norm();
  const double scale = base->norm();

  Matrix sum = Matrix::Zero(dev->rows(), dev->cols());
  Matrix sumsq = sum;
  int used = 0;
  for (const std::vector<int>& idx : ctx.boot) {
    const std::optional<Matrix> mb = gen(idx);
    if (!mb) continue;
    const std::optional<Matrix> db = deviation(*mb);
    if (!db) continue;
    sum += *db;
    sumsq += db->cwiseProduct(*db);
    ++used;
  }
  if (used < 2 || used * 2 < static_cast<int>(ctx.boot.size())) {
    rec.note = label + ": bootstrap unstable";
    return rec;
  }
  const Matrix mean = sum / double(used);
  const Matrix var =
      (sumsq / double(used) - mean.cwiseProduct(mean)).cwiseMax(0.0);
  const double floor = ctx.mult * std::sqrt(var.sum() * double(used) /
                                            double(used - 1));

  rec.evaluated = true;
  rec.pass = T <= std::max(floor, ctx.exact);
  rec.estimate = scale > 0.0 ? T / scale : T;
  rec.reference = scale > 0.0 ? floor / scale : floor;
  rec.se = rec.reference / ctx.mult;
  rec.note = label + ": residual " + fmt(rec.estimate) + " vs allowance " +
             fmt(rec.reference);
  return rec;
}

std::optional<Matrix> exchangeable_deviation(const Matrix& m) {
  try {
    const StructureFit f = fit_exchangeable(m);
    const Matrix fitted =
        f.scale * (Matrix::Identity(m.rows(), m.cols()) +
                   f.coefficient * Matrix::Ones(m.rows(), m.cols()));
    return Matrix(m - fitted);
  } catch (const Error&) {
    return std::nullopt;
  }
}

FitRecord exchangeable_record(const Ctx& ctx, const MatrixGen& gen,
                              const std::string& label,
                              VerificationReport* report = nullptr) {
  if (report) {
    const std::optional<Matrix> m = gen(ctx.full);
    if (m) {
      try {
        const StructureFit f = fit_exchangeable(*m);
        report->fits.push_back({label, f.scale, f.coefficient, f.residual});
      } catch (const Error&) {
      }
    }
  }
  return deviation_record(ctx, gen, exchangeable_deviation, label);
}

Claim claim_from_records(const Ctx& ctx, const std::string& id,
                         const std::vector<FitRecord>& records) {
  Claim c;
  c.id = id;
  bool any = false;
  bool all_pass = true;
  double worst = -1.0;
  std::ostringstream notes;
  for (const FitRecord& rec : records) {
    if (!notes.str().empty()) notes << "; ";
    notes << rec.note;
    if (!rec.evaluated) {
      all_pass = false;
      continue;
    }
    any = true;
    all_pass = all_pass && rec.pass;
    const double score =
        rec.reference > 0.0 ? rec.estimate / rec.reference : kInf;
    if (score > worst) {
      worst = score;
      c.estimate = rec.estimate;
      c.reference = rec.reference;
      c.se = rec.se;
    }
  }
  c.notes = notes.str();
  if (!any) {
    c.verdict = Verdict::kDegenerate;
    return c;
  }
  c.verdict = all_pass ? Verdict::kPass : Verdict::kFail;
  return c;
}

DirectionRow& dir_row(VerificationReport& report, const std::string& id,
                      int comp = -1) {
  for (DirectionRow& row : report.direction_rows) {
    if (row.direction_id == id && row.component == comp) return row;
  }
  DirectionRow fresh;
  fresh.direction_id = id;
  fresh.component = comp;
  report.direction_rows.push_back(std::move(fresh));
  return report.direction_rows.back();
}

// ---------------------------------------------------------------------------
// Mean-structure section.

Claim claim_mean_coordinates(const Ctx& ctx) {
  const DesignData& dd = ctx.designs[ctx.primary];
  MaxStd mx;
  const double root_r = std::sqrt(double(ctx.R));
  for (int g = 0; g < 2; ++g) {
    const Matrix& m = g == 0 ? dd.mean_t : dd.mean_c;
    const char* side = g == 0 ? "treated" : "control";
    for (Eigen::Index a = 0; a < ctx.p; ++a) {
      for (Eigen::Index b = a + 1; b < ctx.p; ++b) {
        std::vector<double> diff(ctx.R);
        for (int i = 0; i < ctx.R; ++i) diff[i] = m(i, a) - m(i, b);
        const double value = mean_of(diff);
        const double se = sd_of(diff) / root_r;
        consider(mx, value, se,
                 std::string(side) + " mean x" + std::to_string(a + 1) +
                     " vs x" + std::to_string(b + 1),
                 ctx.exact);
      }
    }
  }
  if (ctx.p < 2) {
    Claim c;
    c.id = "matched-mean-coordinates-equal";
    c.verdict = Verdict::kPass;
    c.notes = "single coordinate, nothing to compare";
    return c;
  }
  return claim_from(ctx, "matched-mean-coordinates-equal", mx,
                    "matched-mean coordinate gap");
}

Claim claim_gap_cov_exchangeable(const Ctx& ctx,
                                 VerificationReport* report) {
  const DesignData& dd = ctx.designs[ctx.primary];
  MatrixGen gen = [&dd](const std::vector<int>& idx) {
    return std::optional<Matrix>(rows_cov(dd.gap, idx));
  };
  return claim_from_records(
      ctx, "matched-gap-covariance-exchangeable",
      {exchangeable_record(ctx, gen, "covariance of matched mean gaps",
                           report)});
}

Claim claim_dispersion_exchangeable(const Ctx& ctx,
                                    VerificationReport* report) {
  const DesignData& dd = ctx.designs[ctx.primary];
  if (!dd.have_covs) {
    return degenerate_claim("matched-dispersion-exchangeable",
                            "matched groups too small for dispersions");
  }
  auto mean_cov = [&ctx](const std::vector<Matrix>& mats) {
    return [&mats, &ctx](const std::vector<int>& idx) {
      Matrix m = Matrix::Zero(ctx.p, ctx.p);
      for (int i : idx) m += mats[i];
      return std::optional<Matrix>(m / double(idx.size()));
    };
  };
  return claim_from_records(
      ctx, "matched-dispersion-exchangeable",
      {exchangeable_record(ctx, mean_cov(dd.cov_t),
                           "expected treated dispersion", report),
       exchangeable_record(ctx, mean_cov(dd.cov_c),
                           "expected control dispersion", report)});
}

Claim claim_component_structure(const Ctx& ctx) {
  const DesignData& dd = ctx.designs[ctx.primary];
  std::vector<FitRecord> records;
  MaxStd mx;
  std::vector<std::string> skipped;
  for (const auto& [k, comp] : dd.comps) {
    int n_mean = 0, n_cov = 0;
    for (int i = 0; i < ctx.R; ++i) {
      n_mean += comp.has_mean[i];
      n_cov += comp.has_cov[i];
    }
    const std::string tag = "component " + std::to_string(k);
    if (n_mean < 30 || n_cov < 30) {
      skipped.push_back(tag + " (rarely populated)");
      continue;
    }
    for (Eigen::Index a = 0; a < ctx.p && ctx.p >= 2; ++a) {
      for (Eigen::Index b = a + 1; b < ctx.p; ++b) {
        std::vector<double> diff;
        diff.reserve(n_mean);
        for (int i = 0; i < ctx.R; ++i) {
          if (comp.has_mean[i]) diff.push_back(comp.means(i, a) -
                                               comp.means(i, b));
        }
        consider(mx, mean_of(diff), sd_of(diff) / std::sqrt(double(n_mean)),
                 tag + " mean x" + std::to_string(a + 1) + " vs x" +
                     std::to_string(b + 1),
                 ctx.exact);
      }
    }
    MatrixGen mean_cov_gen = [&comp, &ctx](const std::vector<int>& idx)
        -> std::optional<Matrix> {
      std::vector<int> kept;
      for (int i : idx) {
        if (comp.has_mean[i]) kept.push_back(i);
      }
      if (kept.size() < 2) return std::nullopt;
      return rows_cov(comp.means, kept);
    };
    MatrixGen disp_gen = [&comp, &ctx](const std::vector<int>& idx)
        -> std::optional<Matrix> {
      Matrix m = Matrix::Zero(ctx.p, ctx.p);
      int n = 0;
      for (int i : idx) {
        if (!comp.has_cov[i]) continue;
        m += comp.covs[i];
        ++n;
      }
      if (n < 2) return std::nullopt;
      return Matrix(m / double(n));
    };
    records.push_back(
        exchangeable_record(ctx, mean_cov_gen, tag + " mean covariance"));
    records.push_back(
        exchangeable_record(ctx, disp_gen, tag + " expected dispersion"));
  }
  if (records.empty() && mx.checked == 0) {
    return degenerate_claim("component-structure-exchangeable",
                            "no component appears often enough to summarize");
  }
  Claim c = claim_from_records(ctx, "component-structure-exchangeable",
                               records);
  if (mx.checked > 0 && mx.stat > ctx.mult) {
    c.verdict = Verdict::kFail;
    c.notes += "; mean coordinates differ, worst at " + mx.label + " (" +
               fmt(mx.value) + ", se " + fmt(mx.se) + ")";
  } else if (mx.checked > 0) {
    c.notes += "; per-component mean coordinates agree (worst " +
               fmt(mx.value) + " at " + mx.label + ")";
  }
  for (const std::string& s2 : skipped) c.notes += "; skipped " + s2;
  return c;
}

Claim claim_degenerate_flat(const Ctx& ctx) {
  if (!ctx.s.degenerate_z) {
    return degenerate_claim(
        "degenerate-structure-flat",
        "model has a discriminant; applies to coincident-center runs only");
  }
  const DesignData& dd = ctx.designs[ctx.primary];
  MaxStd mx;
  auto coeff_of = [&](const MatrixGen& gen,
                      const std::vector<int>& idx) -> double {
    const std::optional<Matrix> m = gen(idx);
    if (!m) return kNan;
    try {
      return fit_exchangeable(*m).coefficient;
    } catch (const Error&) {
      return kNan;
    }
  };
  std::vector<std::pair<std::string, MatrixGen>> gens;
  gens.emplace_back("gap covariance",
                    MatrixGen([&dd](const std::vector<int>& idx) {
                      return std::optional<Matrix>(rows_cov(dd.gap, idx));
                    }));
  if (dd.have_covs) {
    gens.emplace_back("treated dispersion",
                      MatrixGen([&dd, &ctx](const std::vector<int>& idx) {
                        Matrix m = Matrix::Zero(ctx.p, ctx.p);
                        for (int i : idx) m += dd.cov_t[i];
                        return std::optional<Matrix>(m / double(idx.size()));
                      }));
    gens.emplace_back("control dispersion",
                      MatrixGen([&dd, &ctx](const std::vector<int>& idx) {
                        Matrix m = Matrix::Zero(ctx.p, ctx.p);
                        for (int i : idx) m += dd.cov_c[i];
                        return std::optional<Matrix>(m / double(idx.size()));
                      }));
  }
  for (const auto& [label, gen] : gens) {
    const double c_hat = coeff_of(gen, ctx.full);
    const double se =
        boot_se(ctx, [&](const std::vector<int>& idx) {
          return coeff_of(gen, idx);
        });
    consider(mx, c_hat, se, label + " exchange coefficient", ctx.exact);
  }
  return claim_from(ctx, "degenerate-structure-flat", mx,
                    "exchange coefficient");
}

Claim claim_statistic_constancy(const Ctx& ctx, const std::string& id,
                                const std::vector<int>& dirs) {
  if (dirs.size() < 2) {
    return degenerate_claim(id,
                            "needs at least two orthogonal probe directions");
  }
  const int d0 = ctx.primary;
  MaxStd mx;
  const double root_r = std::sqrt(double(ctx.R));
  std::size_t ref = 0;
  while (ref < dirs.size() && ctx.probe_cache[dirs[ref]] < 0) ++ref;
  if (ref + 1 >= dirs.size()) {
    return degenerate_claim(id,
                            "needs at least two orthogonal probe directions");
  }
  const int ca = ctx.probe_cache[dirs[ref]];
  for (std::size_t b = ref + 1; b < dirs.size(); ++b) {
    const int cb = ctx.probe_cache[dirs[b]];
    if (cb < 0) continue;
    const std::string pair_tag = ctx.s.direction_ids[dirs[b]] + " vs " +
                                 ctx.s.direction_ids[dirs[ref]];
    const Vector& ga = ctx.cache[ca].gap[d0];
    const Vector& gb = ctx.cache[cb].gap[d0];
    const double dv = sub_var(gb, ctx.full) - sub_var(ga, ctx.full);
    const double dv_se = boot_se(ctx, [&](const std::vector<int>& idx) {
      return sub_var(gb, idx) - sub_var(ga, idx);
    });
    consider(mx, dv, dv_se, "gap variance, " + pair_tag, ctx.exact);
    if (ctx.designs[d0].have_covs) {
      for (int side = 0; side < 2; ++side) {
        const Vector& qa = side == 0 ? ctx.cache[ca].quad_t[d0]
                                     : ctx.cache[ca].quad_c[d0];
        const Vector& qb = side == 0 ? ctx.cache[cb].quad_t[d0]
                                     : ctx.cache[cb].quad_c[d0];
        std::vector<double> diff(ctx.R);
        for (int i = 0; i < ctx.R; ++i) diff[i] = qb[i] - qa[i];
        consider(mx, mean_of(diff), sd_of(diff) / root_r,
                 std::string(side == 0 ? "treated" : "control") +
                     " dispersion, " + pair_tag,
                 ctx.exact);
      }
    }
  }
  return claim_from(ctx, id, mx, "cross-direction statistic difference");
}

void mean_structure_section(const Ctx& ctx, VerificationReport& report) {
  report.claims.push_back(claim_mean_coordinates(ctx));
  report.claims.push_back(claim_gap_cov_exchangeable(ctx, &report));
  report.claims.push_back(claim_dispersion_exchangeable(ctx, &report));
  report.claims.push_back(claim_component_structure(ctx));
  report.claims.push_back(claim_degenerate_flat(ctx));
  report.claims.push_back(claim_statistic_constancy(
      ctx, "orthogonal-statistic-constancy", ctx.orth_idx));
}

// ---------------------------------------------------------------------------
// EPBR section.

struct GapMeans {
  double matched = 0.0, matched_se = 0.0;
  double random = 0.0, random_se = 0.0;
  bool random_significant = false;
};

GapMeans gap_means(const Ctx& ctx, int cache_idx) {
  GapMeans gm;
  const Vector& m = ctx.cache[cache_idx].gap[ctx.primary];
  const Vector& r = ctx.cache[cache_idx].gap[ctx.random_design];
  const double root_r = std::sqrt(double(ctx.R));
  gm.matched = sub_mean(m, ctx.full);
  gm.matched_se = std::sqrt(sub_var(m, ctx.full)) / root_r;
  gm.random = sub_mean(r, ctx.full);
  gm.random_se = std::sqrt(sub_var(r, ctx.full)) / root_r;
  gm.random_significant = std::abs(gm.random) > ctx.mult * gm.random_se;
  return gm;
}

double pbr_point(const Ctx& ctx, int cache_idx, const std::vector<int>& idx) {
  const Vector& m = ctx.cache[cache_idx].gap[ctx.primary];
  const Vector& r = ctx.cache[cache_idx].gap[ctx.random_design];
  const double rm = sub_mean(r, idx);
  if (rm == 0.0) return kNan;
  return 100.0 * (1.0 - sub_mean(m, idx) / rm);
}

void epbr_section(const Ctx& ctx, VerificationReport& report) {
  const bool degenerate_z = ctx.s.degenerate_z;
  std::vector<int> probes;
  if (ctx.z_idx >= 0) probes.push_back(ctx.z_idx);
  for (int j : ctx.rand_idx) probes.push_back(j);

  // epbr-uniform
  {
    Claim c;
    c.id = "epbr-uniform";
    if (degenerate_z) {
      c = degenerate_claim(c.id,
                           "no discriminant; see epbr-zero-discriminant");
    } else {
      const GapMeans zg = gap_means(ctx, ctx.probe_cache[ctx.z_idx]);
      if (!zg.random_significant) {
        c = degenerate_claim(
            c.id, "initial discriminant bias indistinguishable from zero; "
                  "see epbr-zero-gap");
      } else {
        MaxStd mx;
        std::vector<int> used;
        std::vector<double> pbrs, ses;
        std::vector<std::vector<double>> boot_pbrs;
        std::string excluded;
        for (int j : probes) {
          const int cidx = ctx.probe_cache[j];
          const GapMeans gm = gap_means(ctx, cidx);
          if (!gm.random_significant) {
            if (!excluded.empty()) excluded += ", ";
            excluded += ctx.s.direction_ids[j];
            continue;
          }
          const double point = pbr_point(ctx, cidx, ctx.full);
          std::vector<double> bvals;
          bvals.reserve(ctx.boot.size());
          for (const std::vector<int>& idx : ctx.boot) {
            bvals.push_back(pbr_point(ctx, cidx, idx));
          }
          std::vector<double> finite;
          for (double v : bvals) {
            if (std::isfinite(v)) finite.push_back(v);
          }
          const double se = finite.size() >= 2 ? sd_of(finite) : kNan;
          used.push_back(j);
          pbrs.push_back(point);
          ses.push_back(se);
          boot_pbrs.push_back(std::move(bvals));
          DirectionRow& row = dir_row(report, ctx.s.direction_ids[j]);
          row.rho = j == ctx.z_idx ? 1.0 : ctx.split[j].rho;
          row.pbr = point;
          row.pbr_se = std::isfinite(se) ? se : 0.0;
        }
        const double z_pbr = pbr_point(ctx, ctx.probe_cache[ctx.z_idx],
                                       ctx.full);
        const double z_pbr_se =
            !used.empty() && used.front() == ctx.z_idx && std::isfinite(
                ses.front())
                ? ses.front()
                : 0.0;
        for (int j : probes) {
          DirectionRow& row = dir_row(report, ctx.s.direction_ids[j]);
          row.pbr_discriminant = z_pbr;
          row.pbr_discriminant_se = z_pbr_se;
        }
        for (std::size_t b = 1; b < used.size(); ++b) {
          std::vector<double> diffs;
          for (std::size_t t = 0; t < boot_pbrs[b].size(); ++t) {
            const double da = boot_pbrs[0][t];
            const double db = boot_pbrs[b][t];
            if (std::isfinite(da) && std::isfinite(db)) {
              diffs.push_back(db - da);
            }
          }
          consider(mx, pbrs[b] - pbrs[0],
                   diffs.size() >= 2 ? sd_of(diffs) : kNan,
                   ctx.s.direction_ids[used[b]] + " vs " +
                       ctx.s.direction_ids[used[0]],
                   ctx.exact);
        }
        // Cross-check the cached discriminant projections against a direct
        // evaluation from the stored coordinates.
        const DesignData& dd = ctx.designs[ctx.primary];
        const Vector direct =
            dd.gap.rowwise().sum() / std::sqrt(double(ctx.p));
        const double resid =
            (direct - ctx.cache[ctx.probe_cache[ctx.z_idx]].gap[ctx.primary])
                .cwiseAbs()
                .maxCoeff();
        c = claim_from(ctx, c.id, mx, "bias-reduction difference");
        if (resid > ctx.exact) {
          c.verdict = Verdict::kFail;
          c.notes += "; discriminant projection cross-check failed (" +
                     fmt(resid) + ")";
        } else {
          c.notes += "; discriminant projection cross-check exact";
        }
        if (used.size() < 2 && c.verdict == Verdict::kPass) {
          c.verdict = Verdict::kDegenerate;
          c.notes += "; fewer than two directions carry significant bias";
        }
        if (!excluded.empty()) {
          c.notes += "; excluded (flat initial bias): " + excluded;
        }
      }
    }
    report.claims.push_back(std::move(c));
  }

  // epbr-sign-safety
  {
    double worst_margin = kInf;
    double worst_se = 0.0;
    std::string worst_label = "none";
    int qualifying = 0;
    std::vector<int> all_probes = probes;
    for (int j : ctx.orth_idx) all_probes.push_back(j);
    for (int j : all_probes) {
      const int cidx = ctx.probe_cache[j];
      if (cidx < 0) continue;
      const GapMeans gm = gap_means(ctx, cidx);
      if (!gm.random_significant) continue;
      ++qualifying;
      const double sign = gm.random >= 0.0 ? 1.0 : -1.0;
      const double margin = gm.matched * sign;
      const double stat =
          gm.matched_se > 0.0 ? margin / gm.matched_se : kInf;
      if (stat < worst_margin) {
        worst_margin = stat;
        worst_se = gm.matched_se;
        worst_label = ctx.s.direction_ids[j];
      }
    }
    Claim c;
    c.id = "epbr-sign-safety";
    if (qualifying == 0) {
      c = degenerate_claim(c.id,
                           "no direction carries significant initial bias");
    } else {
      c.estimate = worst_margin;
      c.se = worst_se;
      c.reference = -ctx.mult;
      c.verdict =
          worst_margin >= -ctx.mult ? Verdict::kPass : Verdict::kFail;
      c.notes = "worst signed matched-bias margin " + fmt(worst_margin) +
                " standard errors at " + worst_label + " (" +
                std::to_string(qualifying) + " directions checked)";
    }
    report.claims.push_back(std::move(c));
  }

  // epbr-zero-discriminant
  {
    Claim c;
    if (!degenerate_z) {
      c = degenerate_claim("epbr-zero-discriminant",
                           "model has a discriminant");
    } else {
      MaxStd mx;
      std::vector<int> all_probes = probes;
      for (int j : ctx.orth_idx) all_probes.push_back(j);
      for (int j : all_probes) {
        const int cidx = ctx.probe_cache[j];
        if (cidx < 0) continue;
        const GapMeans gm = gap_means(ctx, cidx);
        consider(mx, gm.matched, gm.matched_se,
                 "matched bias along " + ctx.s.direction_ids[j], ctx.exact);
        consider(mx, gm.random, gm.random_se,
                 "baseline bias along " + ctx.s.direction_ids[j], ctx.exact);
      }
      c = claim_from(ctx, "epbr-zero-discriminant", mx, "mean gap");
    }
    report.claims.push_back(std::move(c));
  }

  // epbr-zero-gap
  {
    Claim c;
    c.id = "epbr-zero-gap";
    c.verdict = Verdict::kDegenerate;
    if (degenerate_z) {
      c.notes = "no discriminant; see epbr-zero-discriminant";
    } else {
      const GapMeans zg = gap_means(ctx, ctx.probe_cache[ctx.z_idx]);
      if (zg.random_significant) {
        c.notes = "initial discriminant bias is significant; "
                  "see epbr-uniform";
      } else {
        // Reported without a verdict: matched bias along each direction
        // next to its discriminant share, which the theory predicts it
        // equals when the initial discriminant bias vanishes.
        const Vector& zm =
            ctx.cache[ctx.probe_cache[ctx.z_idx]].gap[ctx.primary];
        MaxStd mx;
        const double root_r = std::sqrt(double(ctx.R));
        for (int j : probes) {
          if (j == ctx.z_idx) continue;
          const int cidx = ctx.probe_cache[j];
          const double rho = ctx.split[j].rho;
          const Vector& ym = ctx.cache[cidx].gap[ctx.primary];
          std::vector<double> diff(ctx.R);
          for (int i = 0; i < ctx.R; ++i) diff[i] = ym[i] - rho * zm[i];
          consider(mx, mean_of(diff), sd_of(diff) / root_r,
                   ctx.s.direction_ids[j], ctx.exact);
        }
        c.estimate = mx.value;
        c.se = std::isfinite(mx.se) ? mx.se : 0.0;
        c.reference = ctx.mult * c.se;
        c.notes = "reported without verdict: largest gap between matched "
                  "bias and its discriminant share is " +
                  fmt(mx.value) + " (se " + fmt(mx.se) + ") at " + mx.label;
      }
    }
    report.claims.push_back(std::move(c));
  }
}

// ---------------------------------------------------------------------------
// Variance section.

double ratio_deviation(const Ctx& ctx, int y_cache, int z_cache, int w_cache,
                       double rho, const std::vector<int>& idx) {
  const int d0 = ctx.primary;
  const int dr = ctx.random_design;
  auto var_pair = [&](int cidx, double* m, double* r) {
    if (cidx < 0) {
      *m = 0.0;
      *r = 1.0;
      return;
    }
    *m = sub_var(ctx.cache[cidx].gap[d0], idx);
    *r = sub_var(ctx.cache[cidx].gap[dr], idx);
  };
  double my, ry, mz, rz, mw, rw;
  var_pair(y_cache, &my, &ry);
  var_pair(z_cache, &mz, &rz);
  var_pair(w_cache, &mw, &rw);
  try {
    const VarianceRatioResult res =
        variance_ratio_decomposition(my, ry, mz, rz, mw, rw, rho);
    return res.observed - res.predicted;
  } catch (const Error&) {
    return kNan;
  }
}

void variance_section(const Ctx& ctx, VerificationReport& report) {
  std::vector<int> probes;
  if (ctx.z_idx >= 0) probes.push_back(ctx.z_idx);
  for (int j : ctx.rand_idx) probes.push_back(j);
  for (int j : ctx.orth_idx) probes.push_back(j);

  // variance-ratio-identity
  {
    MaxStd mx;
    for (int j : probes) {
      const int cidx = ctx.probe_cache[j];
      if (cidx < 0) continue;
      const SplitInfo& si = ctx.split[j];
      const double rho = j == ctx.z_idx ? 1.0 : si.rho;
      const int zc = j == ctx.z_idx ? cidx : si.along_cache;
      const int wc = j == ctx.z_idx ? -1 : si.across_cache;
      const double d = ratio_deviation(ctx, cidx, zc, wc, rho, ctx.full);
      const double se = boot_se(ctx, [&](const std::vector<int>& idx) {
        return ratio_deviation(ctx, cidx, zc, wc, rho, idx);
      });
      consider(mx, d, se, ctx.s.direction_ids[j], ctx.exact);
      DirectionRow& row = dir_row(report, ctx.s.direction_ids[j]);
      row.rho = rho;
      const int d0 = ctx.primary, dr = ctx.random_design;
      const double ry = sub_var(ctx.cache[cidx].gap[dr], ctx.full);
      row.ratio_observed =
          ry > 0.0 ? sub_var(ctx.cache[cidx].gap[d0], ctx.full) / ry : 0.0;
      row.ratio_predicted = row.ratio_observed - d;
      row.ratio_se = std::isfinite(se) ? se : 0.0;
    }
    report.claims.push_back(claim_from(ctx, "variance-ratio-identity", mx,
                                       "variance-ratio deviation"));
  }

  // orthogonal-ratio-constancy
  {
    Claim c;
    if (ctx.orth_idx.size() < 2) {
      c = degenerate_claim("orthogonal-ratio-constancy",
                           "needs at least two orthogonal probe directions");
    } else {
      MaxStd mx;
      auto ratio = [&](int cidx, const std::vector<int>& idx) {
        const double r = sub_var(ctx.cache[cidx].gap[ctx.random_design], idx);
        if (!(r > 0.0)) return kNan;
        return sub_var(ctx.cache[cidx].gap[ctx.primary], idx) / r;
      };
      std::size_t ref = 0;
      while (ref < ctx.orth_idx.size() &&
             ctx.probe_cache[ctx.orth_idx[ref]] < 0) {
        ++ref;
      }
      const int ca =
          ref < ctx.orth_idx.size() ? ctx.probe_cache[ctx.orth_idx[ref]] : -1;
      for (std::size_t b = ref + 1; b < ctx.orth_idx.size(); ++b) {
        const int cb = ctx.probe_cache[ctx.orth_idx[b]];
        if (ca < 0 || cb < 0) continue;
        const double d = ratio(cb, ctx.full) - ratio(ca, ctx.full);
        const double se = boot_se(ctx, [&](const std::vector<int>& idx) {
          return ratio(cb, idx) - ratio(ca, idx);
        });
        consider(mx, d, se,
                 ctx.s.direction_ids[ctx.orth_idx[b]] + " vs " +
                     ctx.s.direction_ids[ctx.orth_idx[ref]],
                 ctx.exact);
      }
      c = claim_from(ctx, "orthogonal-ratio-constancy", mx,
                     "orthogonal variance-ratio difference");
    }
    report.claims.push_back(std::move(c));
  }

  // component-dispersion-identity
  {
    std::vector<int> dirs;
    if (ctx.z_idx >= 0) dirs.push_back(ctx.z_idx);
    for (int j : ctx.rand_idx) dirs.push_back(j);
    MaxStd mx;
    std::string skipped;
    const DesignData& dp = ctx.designs[ctx.primary];
    const DesignData& drr = ctx.designs[ctx.random_design];
    for (const auto& [k, comp] : dp.comps) {
      const CompData& rnd = drr.comps.at(k);
      std::vector<unsigned char> joint(ctx.R, 0);
      int n_joint = 0;
      for (int i = 0; i < ctx.R; ++i) {
        joint[i] = comp.has_cov[i] && rnd.has_cov[i];
        n_joint += joint[i];
      }
      if (n_joint < 30) {
        if (!skipped.empty()) skipped += ", ";
        skipped += std::to_string(k);
        continue;
      }
      auto disp_dev = [&](int cidx, int zc, int wc, double rho,
                          const std::vector<int>& idx) -> double {
        auto pair_mean = [&](int cache_idx, double* m, double* r) {
          if (cache_idx < 0) {
            *m = 0.0;
            *r = 1.0;
            return;
          }
          *m = masked_mean(ctx.cache[cache_idx].comp_quad[ctx.primary].at(k),
                           joint, idx);
          *r = masked_mean(
              ctx.cache[cache_idx].comp_quad[ctx.random_design].at(k), joint,
              idx);
        };
        double my, ry, mz, rz, mw, rw;
        pair_mean(cidx, &my, &ry);
        pair_mean(zc, &mz, &rz);
        pair_mean(wc, &mw, &rw);
        try {
          const VarianceRatioResult res =
              component_variance_ratios(my, ry, mz, rz, mw, rw, rho);
          return res.observed - res.predicted;
        } catch (const Error&) {
          return kNan;
        }
      };
      for (int j : dirs) {
        const int cidx = ctx.probe_cache[j];
        if (cidx < 0) continue;
        const SplitInfo& si = ctx.split[j];
        const double rho = j == ctx.z_idx ? 1.0 : si.rho;
        const int zc = j == ctx.z_idx ? cidx : si.along_cache;
        const int wc = j == ctx.z_idx ? -1 : si.across_cache;
        const double d = disp_dev(cidx, zc, wc, rho, ctx.full);
        const double se = boot_se(ctx, [&](const std::vector<int>& idx) {
          return disp_dev(cidx, zc, wc, rho, idx);
        });
        consider(mx, d, se,
                 "component " + std::to_string(k) + " along " +
                     ctx.s.direction_ids[j],
                 ctx.exact);
        DirectionRow& row = dir_row(report, ctx.s.direction_ids[j], k);
        row.rho = rho;
        const double rm = masked_mean(
            ctx.cache[cidx].comp_quad[ctx.random_design].at(k), joint,
            ctx.full);
        row.dispersion_observed =
            rm > 0.0 ? masked_mean(ctx.cache[cidx].comp_quad[ctx.primary]
                                       .at(k),
                                   joint, ctx.full) /
                           rm
                     : 0.0;
        row.dispersion_predicted = row.dispersion_observed - d;
        row.dispersion_se = std::isfinite(se) ? se : 0.0;
      }
    }
    Claim c = mx.checked > 0
                  ? claim_from(ctx, "component-dispersion-identity", mx,
                               "component dispersion-ratio deviation")
                  : degenerate_claim("component-dispersion-identity",
                                     "no component appears often enough");
    if (!skipped.empty()) {
      c.notes += "; skipped rarely populated components " + skipped;
    }
    report.claims.push_back(std::move(c));
  }

  // pooled-dispersion-deviation
  {
    Claim c;
    c.id = "pooled-dispersion-deviation";
    auto separated = [&](const std::vector<int>& comps) {
      double lo = kInf, hi = -kInf;
      for (int k : comps) {
        lo = std::min(lo, ctx.s.delta[k]);
        hi = std::max(hi, ctx.s.delta[k]);
      }
      return comps.size() >= 2 && hi - lo > 1e-9;
    };
    const SizeConfig& sz = ctx.s.config.sizes;
    std::vector<int> sides;  // 0 treated, 1 control
    if (!ctx.s.degenerate_z && separated(ctx.s.treated_components) &&
        sz.matched_treated < sz.treated) {
      sides.push_back(0);
    }
    if (!ctx.s.degenerate_z && separated(ctx.s.control_components) &&
        sz.matched_control < sz.control) {
      sides.push_back(1);
    }
    if (sides.empty() || !ctx.designs[ctx.primary].have_covs) {
      c = degenerate_claim(
          c.id,
          "needs a group mixing separated components with a proper "
          "subsample; the per-component identity is the one that holds");
    } else {
      std::vector<int> dirs;
      if (ctx.z_idx >= 0) dirs.push_back(ctx.z_idx);
      for (int j : ctx.rand_idx) dirs.push_back(j);
      MaxStd mx;
      for (int side : sides) {
        auto pooled_dev = [&](int cidx, int zc, int wc, double rho,
                              const std::vector<int>& idx) -> double {
          auto pair_mean = [&](int cache_idx, double* m, double* r) {
            if (cache_idx < 0) {
              *m = 0.0;
              *r = 1.0;
              return;
            }
            const DirCache& dc = ctx.cache[cache_idx];
            const Vector& vm =
                side == 0 ? dc.quad_t[ctx.primary] : dc.quad_c[ctx.primary];
            const Vector& vr = side == 0 ? dc.quad_t[ctx.random_design]
                                         : dc.quad_c[ctx.random_design];
            *m = sub_mean(vm, idx);
            *r = sub_mean(vr, idx);
          };
          double my, ry, mz, rz, mw, rw;
          pair_mean(cidx, &my, &ry);
          pair_mean(zc, &mz, &rz);
          pair_mean(wc, &mw, &rw);
          try {
            const VarianceRatioResult res =
                component_variance_ratios(my, ry, mz, rz, mw, rw, rho);
            return res.observed - res.predicted;
          } catch (const Error&) {
            return kNan;
          }
        };
        for (int j : dirs) {
          const int cidx = ctx.probe_cache[j];
          if (cidx < 0) continue;
          const SplitInfo& si = ctx.split[j];
          const double rho = j == ctx.z_idx ? 1.0 : si.rho;
          const int zc = j == ctx.z_idx ? cidx : si.along_cache;
          const int wc = j == ctx.z_idx ? -1 : si.across_cache;
          const double d = pooled_dev(cidx, zc, wc, rho, ctx.full);
          const double se = boot_se(ctx, [&](const std::vector<int>& idx) {
            return pooled_dev(cidx, zc, wc, rho, idx);
          });
          consider(mx, d, se,
                   std::string(side == 0 ? "treated" : "control") +
                       " group along " + ctx.s.direction_ids[j],
                   ctx.exact);
        }
      }
      c.estimate = mx.value;
      c.se = std::isfinite(mx.se) ? mx.se : 0.0;
      c.reference = ctx.mult * c.se;
      // This slot records an expected failure: the pooled version of the
      // per-component identity must deviate detectably.
      if (mx.checked == 0) {
        c.verdict = Verdict::kDegenerate;
        c.notes = "no usable direction";
      } else if (mx.stat > ctx.mult) {
        c.verdict = Verdict::kPass;
        c.notes = "pooled dispersion identity deviates as expected: " +
                  fmt(mx.value) + " (se " + fmt(mx.se) + ") at " + mx.label;
      } else {
        c.verdict = Verdict::kFail;
        c.notes = "pooled dispersion identity unexpectedly held; largest "
                  "deviation " +
                  fmt(mx.value) + " (se " + fmt(mx.se) + ") at " + mx.label;
      }
    }
    report.claims.push_back(std::move(c));
  }
}

// ---------------------------------------------------------------------------
// Conditional section.

void conditional_section(const Ctx& ctx, VerificationReport& report) {
  // script-projection-identities
  {
    MaxStd mx;
    for (std::size_t j = 0; j < ctx.s.directions.size(); ++j) {
      const Direction& y = ctx.s.directions[j];
      if (y.is_zero()) continue;
      const ScriptDecomposition sd =
          script_decompose(y, ctx.sdim, ctx.s.degenerate_z);
      const std::string& id = ctx.s.direction_ids[j];
      double worst = 0.0;
      std::string what = "reconstruction";
      auto track = [&](double v, const char* label) {
        if (v > worst) {
          worst = v;
          what = label;
        }
      };
      if (!sd.degenerate_rest) {
        track(sd.gamma.head(ctx.sdim).norm(), "special part of gamma");
        if (!sd.degenerate_span) {
          track(std::abs(sd.gamma.dot(sd.psi)), "gamma against psi");
        }
        track(std::abs(sd.gamma.norm() - 1.0), "gamma norm");
      }
      if (!sd.degenerate_span) {
        const Vector psi_r = sd.psi.tail(ctx.rdim);
        if (ctx.s.degenerate_z) {
          track(psi_r.norm(), "remainder part of psi");
        } else {
          const Vector u_r = Vector::Ones(ctx.rdim) /
                             std::sqrt(double(ctx.rdim));
          track((psi_r - u_r * u_r.dot(psi_r)).norm(),
                "psi off the remainder diagonal");
        }
        track(std::abs(sd.psi.norm() - 1.0), "psi norm");
      }
      Vector rebuilt = Vector::Zero(ctx.p);
      if (!sd.degenerate_span) rebuilt += sd.rho * sd.psi;
      if (!sd.degenerate_rest) {
        rebuilt += std::sqrt(std::max(0.0, 1.0 - sd.rho * sd.rho)) * sd.gamma;
      }
      track((y.coefficients() - rebuilt).norm(), "reconstruction");
      consider(mx, worst, 0.0, id + " " + what, ctx.exact);
    }
    Claim c;
    c.id = "script-projection-identities";
    if (mx.checked == 0) {
      c = degenerate_claim(c.id, "no probe directions");
    } else {
      c.estimate = mx.value;
      c.reference = ctx.exact;
      c.se = 0.0;
      c.verdict = mx.value <= ctx.exact ? Verdict::kPass : Verdict::kFail;
      c.notes = "largest projection-identity violation " + fmt(mx.value) +
                " at " + mx.label;
    }
    report.claims.push_back(std::move(c));
  }

  // subspace-statistic-constancy
  report.claims.push_back(claim_statistic_constancy(
      ctx, "subspace-statistic-constancy", ctx.orth_idx));

  // subspace-epbr-uniform
  {
    MaxStd mx;
    std::string excluded;
    int compared = 0;
    for (int j : ctx.rand_idx) {
      const int cidx = ctx.probe_cache[j];
      const SplitInfo& si = ctx.split[j];
      if (cidx < 0 || si.along_cache < 0) continue;
      const GapMeans gy = gap_means(ctx, cidx);
      const GapMeans gp = gap_means(ctx, si.along_cache);
      if (!gy.random_significant || !gp.random_significant) {
        if (!excluded.empty()) excluded += ", ";
        excluded += ctx.s.direction_ids[j];
        continue;
      }
      ++compared;
      const double d = pbr_point(ctx, cidx, ctx.full) -
                       pbr_point(ctx, si.along_cache, ctx.full);
      const double se = boot_se(ctx, [&](const std::vector<int>& idx) {
        return pbr_point(ctx, cidx, idx) -
               pbr_point(ctx, si.along_cache, idx);
      });
      consider(mx, d, se, ctx.s.direction_ids[j], ctx.exact);
      DirectionRow& row = dir_row(report, ctx.s.direction_ids[j]);
      row.rho = si.rho;
      row.pbr = pbr_point(ctx, cidx, ctx.full);
      row.pbr_discriminant = pbr_point(ctx, si.along_cache, ctx.full);
      row.pbr_se = std::isfinite(se) ? se : 0.0;
    }
    Claim c;
    if (compared == 0) {
      c = degenerate_claim("subspace-epbr-uniform",
                           "no direction carries significant initial bias "
                           "along itself and its subspace projection");
    } else {
      c = claim_from(ctx, "subspace-epbr-uniform", mx,
                     "bias-reduction gap to the subspace projection");
    }
    if (!excluded.empty()) {
      c.notes += "; excluded (flat initial bias): " + excluded;
    }
    report.claims.push_back(std::move(c));
  }

  // subspace-variance-ratio-identity
  {
    MaxStd mx;
    std::vector<int> dirs = ctx.rand_idx;
    for (int j : ctx.orth_idx) dirs.push_back(j);
    for (int j : dirs) {
      const int cidx = ctx.probe_cache[j];
      if (cidx < 0) continue;
      const SplitInfo& si = ctx.split[j];
      const double d = ratio_deviation(ctx, cidx, si.along_cache,
                                       si.across_cache, si.rho, ctx.full);
      const double se = boot_se(ctx, [&](const std::vector<int>& idx) {
        return ratio_deviation(ctx, cidx, si.along_cache, si.across_cache,
                               si.rho, idx);
      });
      consider(mx, d, se, ctx.s.direction_ids[j], ctx.exact);
      DirectionRow& row = dir_row(report, ctx.s.direction_ids[j]);
      row.rho = si.rho;
      const double ry = sub_var(ctx.cache[cidx].gap[ctx.random_design],
                                ctx.full);
      row.ratio_observed =
          ry > 0.0
              ? sub_var(ctx.cache[cidx].gap[ctx.primary], ctx.full) / ry
              : 0.0;
      row.ratio_predicted = row.ratio_observed - d;
      row.ratio_se = std::isfinite(se) ? se : 0.0;
    }
    report.claims.push_back(claim_from(ctx, "subspace-variance-ratio-identity",
                                       mx, "variance-ratio deviation"));
  }

  // subspace-component-dispersion-identity
  {
    MaxStd mx;
    std::string skipped;
    const DesignData& dp = ctx.designs[ctx.primary];
    const DesignData& drr = ctx.designs[ctx.random_design];
    if (dp.have_covs) {
      for (const auto& [k, comp] : dp.comps) {
        const CompData& rnd = drr.comps.at(k);
        std::vector<unsigned char> joint(ctx.R, 0);
        int n_joint = 0;
        for (int i = 0; i < ctx.R; ++i) {
          joint[i] = comp.has_cov[i] && rnd.has_cov[i];
          n_joint += joint[i];
        }
        if (n_joint < 30) {
          if (!skipped.empty()) skipped += ", ";
          skipped += std::to_string(k);
          continue;
        }
        auto disp_dev = [&](int cidx, int zc, int wc, double rho,
                            const std::vector<int>& idx) -> double {
          auto pair_mean = [&](int cache_idx, double* m, double* r) {
            if (cache_idx < 0) {
              *m = 0.0;
              *r = 1.0;
              return;
            }
            *m = masked_mean(
                ctx.cache[cache_idx].comp_quad[ctx.primary].at(k), joint,
                idx);
            *r = masked_mean(
                ctx.cache[cache_idx].comp_quad[ctx.random_design].at(k),
                joint, idx);
          };
          double my, ry, mz, rz, mw, rw;
          pair_mean(cidx, &my, &ry);
          pair_mean(zc, &mz, &rz);
          pair_mean(wc, &mw, &rw);
          try {
            const VarianceRatioResult res =
                component_variance_ratios(my, ry, mz, rz, mw, rw, rho);
            return res.observed - res.predicted;
          } catch (const Error&) {
            return kNan;
          }
        };
        for (int j : ctx.rand_idx) {
          const int cidx = ctx.probe_cache[j];
          if (cidx < 0) continue;
          const SplitInfo& si = ctx.split[j];
          const double d =
              disp_dev(cidx, si.along_cache, si.across_cache, si.rho,
                       ctx.full);
          const double se = boot_se(ctx, [&](const std::vector<int>& idx) {
            return disp_dev(cidx, si.along_cache, si.across_cache, si.rho,
                            idx);
          });
          consider(mx, d, se,
                   "component " + std::to_string(k) + " along " +
                       ctx.s.direction_ids[j],
                   ctx.exact);
          DirectionRow& row = dir_row(report, ctx.s.direction_ids[j], k);
          row.rho = si.rho;
          const double rm = masked_mean(
              ctx.cache[cidx].comp_quad[ctx.random_design].at(k), joint,
              ctx.full);
          row.dispersion_observed =
              rm > 0.0 ? masked_mean(
                             ctx.cache[cidx].comp_quad[ctx.primary].at(k),
                             joint, ctx.full) /
                             rm
                       : 0.0;
          row.dispersion_predicted = row.dispersion_observed - d;
          row.dispersion_se = std::isfinite(se) ? se : 0.0;
        }
      }
    }
    Claim c =
        mx.checked > 0
            ? claim_from(ctx, "subspace-component-dispersion-identity", mx,
                         "component dispersion-ratio deviation")
            : degenerate_claim("subspace-component-dispersion-identity",
                               "no component appears often enough");
    if (!skipped.empty()) {
      c.notes += "; skipped rarely populated components " + skipped;
    }
    report.claims.push_back(std::move(c));
  }

  // block-structure-fit and block-degenerate-flat
  {
    const DesignData& dd = ctx.designs[ctx.primary];
    std::vector<std::pair<std::string, MatrixGen>> gens;
    gens.emplace_back("gap covariance",
                      MatrixGen([&dd](const std::vector<int>& idx) {
                        return std::optional<Matrix>(rows_cov(dd.gap, idx));
                      }));
    if (dd.have_covs) {
      gens.emplace_back("treated dispersion",
                        MatrixGen([&dd, &ctx](const std::vector<int>& idx) {
                          Matrix m = Matrix::Zero(ctx.p, ctx.p);
                          for (int i : idx) m += dd.cov_t[i];
                          return std::optional<Matrix>(m /
                                                       double(idx.size()));
                        }));
      gens.emplace_back("control dispersion",
                        MatrixGen([&dd, &ctx](const std::vector<int>& idx) {
                          Matrix m = Matrix::Zero(ctx.p, ctx.p);
                          for (int i : idx) m += dd.cov_c[i];
                          return std::optional<Matrix>(m /
                                                       double(idx.size()));
                        }));
    }
    const Eigen::Index s = ctx.sdim;
    const Eigen::Index r = ctx.rdim;
    DeviationFn block_dev = [s, r](const Matrix& m) -> std::optional<Matrix> {
      try {
        const BlockStructureFit f = fit_block_structure(m, s);
        // Stack the doubled cross deviation over the remainder deviation so
        // the Frobenius norm matches the fit's total residual.
        const Matrix cross = m.topRightCorner(s, r) -
                             f.cross_coefficients * Matrix::Ones(1, r);
        const Matrix rem_fitted =
            f.remainder_scale * (Matrix::Identity(r, r) +
                                 f.remainder_coefficient * Matrix::Ones(r, r));
        Matrix dev = Matrix::Zero(s + r, r);
        dev.topRows(s) = std::sqrt(2.0) * cross;
        dev.bottomRows(r) = m.bottomRightCorner(r, r) - rem_fitted;
        return dev;
      } catch (const Error&) {
        return std::nullopt;
      }
    };
    std::vector<FitRecord> records;
    for (const auto& [label, gen] : gens) {
      const std::optional<Matrix> m = gen(ctx.full);
      if (m) {
        try {
          const BlockStructureFit f = fit_block_structure(*m, s);
          report.fits.push_back({label + " remainder block",
                                 f.remainder_scale, f.remainder_coefficient,
                                 f.remainder_residual});
        } catch (const Error&) {
        }
      }
      records.push_back(deviation_record(ctx, gen, block_dev, label));
    }
    report.claims.push_back(
        claim_from_records(ctx, "block-structure-fit", records));

    Claim flat;
    if (!ctx.s.degenerate_z) {
      flat = degenerate_claim(
          "block-degenerate-flat",
          "remainder discriminant present; applies to coincident-center "
          "runs only");
    } else {
      MaxStd mx;
      for (const auto& [label, gen] : gens) {
        auto coeffs = [&](const std::vector<int>& idx, int which) -> double {
          const std::optional<Matrix> m = gen(idx);
          if (!m) return kNan;
          try {
            const BlockStructureFit f = fit_block_structure(*m, s);
            if (which < 0) return f.remainder_coefficient;
            return f.cross_coefficients[which];
          } catch (const Error&) {
            return kNan;
          }
        };
        for (int which = -1; which < static_cast<int>(s); ++which) {
          const double v = coeffs(ctx.full, which);
          const double se = boot_se(ctx, [&](const std::vector<int>& idx) {
            return coeffs(idx, which);
          });
          const std::string what =
              which < 0 ? label + " remainder coefficient"
                        : label + " cross coefficient " +
                              std::to_string(which + 1);
          consider(mx, v, se, what, ctx.exact);
        }
      }
      flat = claim_from(ctx, "block-degenerate-flat", mx,
                        "coupling coefficient");
    }
    report.claims.push_back(std::move(flat));
  }
}

// ---------------------------------------------------------------------------
// Invariance machinery.

Matrix random_linear_map(Stream& stream, Eigen::Index p) {
  auto rotation = [&]() {
    Matrix g(p, p);
    for (Eigen::Index i = 0; i < p; ++i) {
      for (Eigen::Index j = 0; j < p; ++j) g(i, j) = stream.normal();
    }
    const Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ();
    const Matrix rr = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < p; ++j) {
      if (rr(j, j) < 0.0) q.col(j) = -q.col(j);
    }
    return q;
  };
  const Matrix q1 = rotation();
  const Matrix q2 = rotation();
  Vector sv(p);
  const double lo = std::log(0.2), hi = std::log(5.0);
  for (Eigen::Index i = 0; i < p; ++i) {
    sv[i] = std::exp(lo + (hi - lo) * stream.uniform());
  }
  return q1 * sv.asDiagonal() * q2;
}

Vector random_offset(Stream& stream, Eigen::Index p) {
  Vector b(p);
  for (Eigen::Index i = 0; i < p; ++i) b[i] = 2.0 * stream.normal();
  return b;
}

bool same_selection(const MatchResult& a, const MatchResult& b) {
  auto sorted = [](std::vector<int> v) {
    std::sort(v.begin(), v.end());
    return v;
  };
  return sorted(a.treated_rows) == sorted(b.treated_rows) &&
         sorted(a.control_rows) == sorted(b.control_rows);
}

Sample mapped_sample(const Sample& panel, const Matrix& linear,
                     const Vector& offset) {
  Sample out = panel;
  out.treated = apply_affine(linear, offset, panel.treated);
  out.control = apply_affine(linear, offset, panel.control);
  return out;
}

Sample invariance_panel(const ExperimentConfig& config, int nt, int nc,
                        std::uint64_t panel_index) {
  const AllocationRule proportional;
  const std::uint64_t master =
      mix_seed(config.seed ^ (stream_tag::kPanel << 32));
  if (config.model) {
    return draw_panel(*config.model, nt, nc, proportional, master,
                      panel_index);
  }
  return draw_conditional_panel(*config.conditional, nt, nc, proportional,
                                master, panel_index);
}

Claim plain_invariance_claim(const ExperimentConfig& config,
                             MatchMethod method, int n_maps) {
  const std::string id = std::string("invariance-") +
                         match_method_name(method);
  const Eigen::Index p = config.dimension();
  const int nt = config.invariance.treated;
  const int nc = config.invariance.control;
  MatchSpec spec;
  spec.method = method;
  spec.matched_treated = std::min(nt, nc);
  spec.matched_control = spec.matched_treated;

  Claim c;
  c.id = id;
  int mismatches = 0;
  int compared = 0;
  try {
    for (int panel_i = 0; panel_i < config.invariance.panels; ++panel_i) {
      const Sample panel = invariance_panel(config, nt, nc, panel_i);
      const MatchResult base = run_matcher(panel, spec);
      Stream maps = Stream::keyed(
          config.seed,
          {stream_tag::kMaps, static_cast<std::uint64_t>(method),
           static_cast<std::uint64_t>(panel_i)});
      for (int m = 0; m < n_maps; ++m) {
        const Matrix a = random_linear_map(maps, p);
        const Vector b = random_offset(maps, p);
        const MatchResult mapped = run_matcher(mapped_sample(panel, a, b),
                                               spec);
        ++compared;
        if (!same_selection(base, mapped)) ++mismatches;
      }
    }
  } catch (const Error& e) {
    c.verdict = Verdict::kFail;
    c.notes = std::string("invariance run failed: ") + e.what();
    return c;
  }
  c.estimate = mismatches;
  c.reference = 0.0;
  c.verdict = mismatches == 0 ? Verdict::kPass : Verdict::kFail;
  c.notes = std::to_string(compared) + " panel/map comparisons, " +
            std::to_string(mismatches) + " mismatches";
  return c;
}

Claim negative_control_claim() {
  Sample panel;
  panel.treated = Matrix::Zero(1, 2);
  panel.control = Matrix(2, 2);
  panel.control << 1.0, 5.0, -2.0, -1.0;
  panel.treated_component = {0};
  panel.control_component = {0, 0};
  MatchSpec spec;
  spec.method = MatchMethod::kCoordinate;
  spec.coordinate = 0;
  spec.matched_treated = 1;
  spec.matched_control = 1;

  Claim c;
  c.id = "invariance-negative-control";
  try {
    const MatchResult base = run_matcher(panel, spec);
    Matrix rot(2, 2);
    rot << 0.0, -1.0, 1.0, 0.0;
    const MatchResult turned =
        run_matcher(mapped_sample(panel, rot, Vector::Zero(2)), spec);
    const bool changed = !same_selection(base, turned);
    c.estimate = changed ? 1.0 : 0.0;
    c.reference = 1.0;
    c.verdict = changed ? Verdict::kPass : Verdict::kFail;
    c.notes = changed
                  ? "single-coordinate matching picked a different control "
                    "after a rotation, as a non-invariant method must"
                  : "rotation failed to change the single-coordinate match";
  } catch (const Error& e) {
    c.verdict = Verdict::kFail;
    c.notes = std::string("negative control failed to run: ") + e.what();
  }
  return c;
}

Claim conditional_remainder_invariance_claim(const ExperimentConfig& config,
                                             int n_maps) {
  Claim c;
  c.id = "conditional-invariance-remainder";
  if (!config.conditional) {
    return degenerate_claim(c.id, "needs a conditional model");
  }
  const ConditionalModel& model = *config.conditional;
  const Eigen::Index p = model.dimension();
  const std::vector<int>& scols = model.special_columns();
  const std::vector<int> rcols = model.remainder_columns();
  const Eigen::Index r = model.remainder_dim();
  const int nt = config.invariance.treated;
  const int nc = config.invariance.control;

  MatchSpec spec;
  spec.method = MatchMethod::kConditional;
  spec.special_columns = scols;
  spec.matched_treated = std::min(nt, nc);
  spec.matched_control = spec.matched_treated;

  int mismatches = 0;
  int compared = 0;
  try {
    for (int panel_i = 0; panel_i < config.invariance.panels; ++panel_i) {
      const Sample panel = invariance_panel(config, nt, nc, panel_i);
      const MatchResult base = run_matcher(panel, spec);
      Stream maps = Stream::keyed(
          config.seed,
          {stream_tag::kMaps,
           static_cast<std::uint64_t>(MatchMethod::kConditional),
           static_cast<std::uint64_t>(panel_i)});
      for (int m = 0; m < n_maps; ++m) {
        // Specials stay fixed; the remainder block gets a full-rank map
        // plus a shear in the specials.
        const Matrix ar = random_linear_map(maps, r);
        Matrix shear(r, scols.size());
        for (Eigen::Index i = 0; i < shear.rows(); ++i) {
          for (Eigen::Index j = 0; j < shear.cols(); ++j) {
            shear(i, j) = maps.normal();
          }
        }
        const Vector br = random_offset(maps, r);
        Matrix linear = Matrix::Zero(p, p);
        Vector offset = Vector::Zero(p);
        for (std::size_t i = 0; i < scols.size(); ++i) {
          linear(scols[i], scols[i]) = 1.0;
        }
        for (Eigen::Index i = 0; i < r; ++i) {
          for (Eigen::Index j = 0; j < r; ++j) {
            linear(rcols[i], rcols[j]) = ar(i, j);
          }
          for (std::size_t j = 0; j < scols.size(); ++j) {
            linear(rcols[i], scols[j]) = shear(i, j);
          }
          offset[rcols[i]] = br[i];
        }
        const MatchResult mapped =
            run_matcher(mapped_sample(panel, linear, offset), spec);
        ++compared;
        if (!same_selection(base, mapped)) ++mismatches;
      }
    }
  } catch (const Error& e) {
    c.verdict = Verdict::kFail;
    c.notes = std::string("invariance run failed: ") + e.what();
    return c;
  }
  c.estimate = mismatches;
  c.reference = 0.0;
  c.verdict = mismatches == 0 ? Verdict::kPass : Verdict::kFail;
  c.notes = std::to_string(compared) +
            " panel/map comparisons under special-preserving maps, " +
            std::to_string(mismatches) + " mismatches";
  return c;
}

Claim conditional_negative_control_claim() {
  Sample panel;
  panel.treated = Matrix(1, 2);
  panel.treated << 0.0, 1.0;
  panel.control = Matrix(3, 2);
  panel.control << 0.0, 0.0, 1.0, 1.0, 1.0, 0.0;
  panel.treated_component = {0};
  panel.control_component = {0, 0, 0};
  MatchSpec spec;
  spec.method = MatchMethod::kConditional;
  spec.special_columns = {0};
  spec.matched_treated = 1;
  spec.matched_control = 1;

  Claim c;
  c.id = "conditional-invariance-negative-control";
  try {
    const MatchResult base = run_matcher(panel, spec);
    Matrix swap(2, 2);
    swap << 0.0, 1.0, 1.0, 0.0;
    const MatchResult swapped =
        run_matcher(mapped_sample(panel, swap, Vector::Zero(2)), spec);
    const bool changed = !same_selection(base, swapped);
    c.estimate = changed ? 1.0 : 0.0;
    c.reference = 1.0;
    c.verdict = changed ? Verdict::kPass : Verdict::kFail;
    c.notes = changed
                  ? "a map scrambling the special column moved the match to "
                    "a different stratum, as it must"
                  : "scrambling the special column failed to change the "
                    "conditional match";
  } catch (const Error& e) {
    c.verdict = Verdict::kFail;
    c.notes = std::string("negative control failed to run: ") + e.what();
  }
  return c;
}

// ---------------------------------------------------------------------------
// Orchestration.

void push_suite_skips(VerificationReport& report,
                      const std::vector<std::string>& ids) {
  for (const std::string& id : ids) {
    report.claims.push_back(degenerate_claim(id, "suite not selected"));
  }
}

void finalize(VerificationReport& report) {
  const std::vector<std::string>& registry = claim_registry();
  std::map<std::string, Claim> by_id;
  for (Claim& c : report.claims) {
    if (by_id.count(c.id)) {
      throw Error("claim evaluated twice: " + c.id);
    }
    by_id.emplace(c.id, std::move(c));
  }
  report.claims.clear();
  for (const std::string& id : registry) {
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      throw Error("claim missing from the report: " + id);
    }
    report.claims.push_back(std::move(it->second));
    by_id.erase(it);
  }
  if (!by_id.empty()) {
    throw Error("claim not in the registry: " + by_id.begin()->first);
  }
}

}  // namespace

std::vector<Claim> verify_affine_invariance(const ExperimentConfig& config,
                                            MatchMethod method, int n_maps) {
  return {plain_invariance_claim(config, method, n_maps)};
}

void verify_mean_structure(const ReplicationStats& stats,
                           VerificationReport& report) {
  static const std::vector<std::string> ids = {
      "matched-mean-coordinates-equal",
      "matched-gap-covariance-exchangeable",
      "matched-dispersion-exchangeable",
      "component-structure-exchangeable",
      "degenerate-structure-flat",
      "orthogonal-statistic-constancy",
  };
  if (stats.special_dim > 0) {
    for (const std::string& id : ids) {
      report.claims.push_back(degenerate_claim(
          id, "conditional run; see the subspace claims"));
    }
    return;
  }
  const Ctx ctx = build_ctx(stats);
  mean_structure_section(ctx, report);
}

void verify_epbr(const ReplicationStats& stats, VerificationReport& report) {
  static const std::vector<std::string> ids = {
      "epbr-uniform", "epbr-sign-safety", "epbr-zero-discriminant",
      "epbr-zero-gap"};
  if (stats.special_dim > 0) {
    for (const std::string& id : ids) {
      report.claims.push_back(degenerate_claim(
          id, "conditional run; see subspace-epbr-uniform"));
    }
    return;
  }
  const Ctx ctx = build_ctx(stats);
  epbr_section(ctx, report);
}

void verify_variance_decompositions(const ReplicationStats& stats,
                                    VerificationReport& report) {
  static const std::vector<std::string> ids = {
      "variance-ratio-identity", "orthogonal-ratio-constancy",
      "component-dispersion-identity", "pooled-dispersion-deviation"};
  if (stats.special_dim > 0) {
    for (const std::string& id : ids) {
      report.claims.push_back(degenerate_claim(
          id, "conditional run; see the subspace claims"));
    }
    return;
  }
  const Ctx ctx = build_ctx(stats);
  variance_section(ctx, report);
}

void verify_conditional(const ReplicationStats& stats,
                        VerificationReport& report) {
  static const std::vector<std::string> ids = {
      "script-projection-identities",
      "subspace-statistic-constancy",
      "subspace-epbr-uniform",
      "subspace-variance-ratio-identity",
      "subspace-component-dispersion-identity",
      "block-structure-fit",
      "block-degenerate-flat",
  };
  if (stats.special_dim == 0) {
    for (const std::string& id : ids) {
      report.claims.push_back(
          degenerate_claim(id, "needs a conditional model"));
    }
    return;
  }
  const Ctx ctx = build_ctx(stats);
  conditional_section(ctx, report);
}

VerificationReport verify(const ReplicationStats& stats, Suite suite) {
  VerificationReport report;
  report.config_name = stats.config.name;
  report.seed = stats.config.seed;
  report.suite = suite_name(suite);
  report.replications = stats.config.replications;
  report.excluded = stats.excluded;

  const auto selected = [suite](Suite s2) {
    return suite == Suite::kAll || suite == s2;
  };

  if (selected(Suite::kInvariance)) {
    for (MatchMethod m : {MatchMethod::kMahalanobisGreedy,
                          MatchMethod::kMahalanobisOptimal,
                          MatchMethod::kDiscriminantCaliper}) {
      for (Claim& c : verify_affine_invariance(stats.config, m,
                                               stats.config.invariance.maps)) {
        report.claims.push_back(std::move(c));
      }
    }
    report.claims.push_back(negative_control_claim());
    report.claims.push_back(conditional_remainder_invariance_claim(
        stats.config, stats.config.invariance.maps));
    report.claims.push_back(conditional_negative_control_claim());
  } else {
    push_suite_skips(report, {"invariance-mahalanobis-greedy",
                              "invariance-mahalanobis-optimal",
                              "invariance-discriminant-caliper",
                              "invariance-negative-control",
                              "conditional-invariance-remainder",
                              "conditional-invariance-negative-control"});
  }

  if (selected(Suite::kMeanStructure)) {
    verify_mean_structure(stats, report);
  } else {
    push_suite_skips(report, {"matched-mean-coordinates-equal",
                              "matched-gap-covariance-exchangeable",
                              "matched-dispersion-exchangeable",
                              "component-structure-exchangeable",
                              "degenerate-structure-flat",
                              "orthogonal-statistic-constancy"});
  }
  if (selected(Suite::kEpbr)) {
    verify_epbr(stats, report);
  } else {
    push_suite_skips(report, {"epbr-uniform", "epbr-sign-safety",
                              "epbr-zero-discriminant", "epbr-zero-gap"});
  }
  if (selected(Suite::kVariance)) {
    verify_variance_decompositions(stats, report);
  } else {
    push_suite_skips(report,
                     {"variance-ratio-identity", "orthogonal-ratio-constancy",
                      "component-dispersion-identity",
                      "pooled-dispersion-deviation"});
  }
  if (selected(Suite::kConditional)) {
    verify_conditional(stats, report);
  } else {
    push_suite_skips(report, {"script-projection-identities",
                              "subspace-statistic-constancy",
                              "subspace-epbr-uniform",
                              "subspace-variance-ratio-identity",
                              "subspace-component-dispersion-identity",
                              "block-structure-fit",
                              "block-degenerate-flat"});
  }

  finalize(report);
  return report;
}

}  // namespace dmpes
