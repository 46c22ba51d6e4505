#include <limits>
#include <vector>

#include "dmpes/matchers.hpp"

namespace dmpes::detail {

namespace {

constexpr double kBlocked = 1e15;

struct Solved {
  std::vector<int> row_to_col;
  double total = 0.0;
  std::vector<double> row_potential;
  std::vector<double> col_potential;
};

/// Shortest-augmenting-path assignment for an n x m cost matrix, n <= m.
/// The final potentials satisfy cost(i,j) >= u[i] + v[j] with equality on
/// assigned arcs.
Solved hungarian(const Matrix& cost) {
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  const double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> col_to_row(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    col_to_row[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      int i0 = col_to_row[j0], j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[col_to_row[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (col_to_row[j0] != 0);
    do {
      int j1 = way[j0];
      col_to_row[j0] = col_to_row[j1];
      j0 = j1;
    } while (j0);
  }
  Solved out;
  out.row_to_col.assign(n, -1);
  out.row_potential.assign(n, 0.0);
  out.col_potential.assign(m, 0.0);
  for (int j = 1; j <= m; ++j) {
    if (col_to_row[j] > 0) out.row_to_col[col_to_row[j] - 1] = j - 1;
    out.col_potential[j - 1] = v[j];
  }
  for (int i = 1; i <= n; ++i) out.row_potential[i - 1] = u[i];
  for (int i = 0; i < n; ++i) out.total += cost(i, out.row_to_col[i]);
  return out;
}

}  // namespace

std::vector<int> solve_assignment(const Matrix& cost) {
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  if (n == 0) return {};
  if (n > m) {
    throw DimensionError("assignment needs at least as many columns as rows");
  }
  if (!cost.allFinite()) {
    throw ConfigError("assignment costs must be finite");
  }
  const double eps = 1e-9 * (1.0 + cost.cwiseAbs().maxCoeff());

  // Fix rows one at a time, in index order, to the smallest column that
  // still admits a minimum-cost completion. Zero reduced cost against the
  // optimal potentials is necessary for a column to appear in any optimal
  // assignment, so only those candidates need a verification solve.
  std::vector<int> result(n, -1);
  std::vector<int> rows(n), cols(m);
  for (int i = 0; i < n; ++i) rows[i] = i;
  for (int j = 0; j < m; ++j) cols[j] = j;

  while (!rows.empty()) {
    Matrix sub(rows.size(), cols.size());
    for (size_t a = 0; a < rows.size(); ++a) {
      for (size_t b = 0; b < cols.size(); ++b) {
        sub(a, b) = cost(rows[a], cols[b]);
      }
    }
    Solved base = hungarian(sub);
    int pick = base.row_to_col[0];
    for (size_t b = 0; b < static_cast<size_t>(pick); ++b) {
      double reduced =
          sub(0, b) - base.row_potential[0] - base.col_potential[b];
      if (reduced > eps) continue;
      Matrix forced = sub;
      for (size_t j = 0; j < cols.size(); ++j) {
        if (j != b) forced(0, j) = kBlocked;
      }
      Solved trial = hungarian(forced);
      if (trial.total <= base.total + eps) {
        pick = static_cast<int>(b);
        break;
      }
    }
    result[rows[0]] = cols[pick];
    rows.erase(rows.begin());
    cols.erase(cols.begin() + pick);
  }
  return result;
}

}  // namespace dmpes::detail
