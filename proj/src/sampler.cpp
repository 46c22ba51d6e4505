#include "dmpes/sampler.hpp"

#include <Eigen/Cholesky>
#include <cmath>

namespace dmpes {

std::uint64_t mix_seed(std::uint64_t state) {
  // splitmix64 finalizer
  state += 0x9e3779b97f4a7c15ULL;
  state = (state ^ (state >> 30)) * 0xbf58476d1ce4e5b9ULL;
  state = (state ^ (state >> 27)) * 0x94d049bb133111ebULL;
  return state ^ (state >> 31);
}

std::vector<int> Stream::multinomial(int n, const Vector& probs) {
  std::vector<int> counts(probs.size(), 0);
  double mass = probs.sum();
  int left = n;
  for (Eigen::Index k = 0; k + 1 < probs.size() && left > 0; ++k) {
    double q = mass > 0.0 ? probs[k] / mass : 0.0;
    q = std::min(1.0, std::max(0.0, q));
    counts[k] = binomial(left, q);
    left -= counts[k];
    mass -= probs[k];
  }
  if (probs.size() > 0) counts[probs.size() - 1] += left;
  return counts;
}

std::vector<int> Stream::permutation(int n) {
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  for (int i = n - 1; i > 0; --i) {
    std::swap(perm[i], perm[static_cast<int>(below(i + 1))]);
  }
  return perm;
}

Vector Stream::unit_vector(Eigen::Index p) {
  Vector z(p);
  double n = 0.0;
  while (n <= 1e-12) {
    for (Eigen::Index i = 0; i < p; ++i) z[i] = normal();
    n = z.norm();
  }
  return z / n;
}

Vector radial_pull(const RadialLaw& law, Eigen::Index p, Stream& stream) {
  Vector z(p);
  for (Eigen::Index j = 0; j < p; ++j) z[j] = stream.normal();
  switch (law.kind) {
    case RadialLaw::Kind::kNormal:
      break;
    case RadialLaw::Kind::kStudentT: {
      // z * sqrt((df-2)/g) with g chi-squared(df) has identity covariance
      // for df > 2.
      double df = law.degrees_of_freedom;
      double g = stream.chi_squared(df);
      z *= std::sqrt((df - 2.0) / g);
      break;
    }
    case RadialLaw::Kind::kUniformBall: {
      // Uniform on the ball of radius sqrt(p+2), which has identity
      // covariance.
      double radius =
          std::pow(stream.uniform(), 1.0 / static_cast<double>(p));
      z = (z / z.norm()) * radius * std::sqrt(static_cast<double>(p) + 2.0);
      break;
    }
  }
  return z;
}

Matrix sample_component(const Component& component, int n, Stream& stream) {
  const Eigen::Index p = component.center.size();
  Matrix rows(n, p);
  if (n == 0) return rows;
  Eigen::LLT<Matrix> llt(component.covariance);
  if (llt.info() != Eigen::Success) {
    throw ConditioningError("component covariance is not factorable");
  }
  Matrix L = llt.matrixL();
  for (int i = 0; i < n; ++i) {
    Vector z = radial_pull(component.radial, p, stream);
    rows.row(i) = (component.center + L * z).transpose();
  }
  return rows;
}

std::vector<int> allocate_counts(const std::vector<int>& group_indices,
                                 const Vector& group_weights,
                                 int component_count, int total,
                                 const AllocationRule& rule, Stream& stream) {
  if (rule.kind == AllocationRule::Kind::kFixed) {
    if (rule.fixed_counts.size() != static_cast<size_t>(component_count)) {
      throw ConfigError("fixed allocation needs one count per component");
    }
    std::vector<int> counts(group_indices.size());
    int sum = 0;
    for (size_t i = 0; i < group_indices.size(); ++i) {
      counts[i] = rule.fixed_counts[group_indices[i]];
      if (counts[i] < 0) {
        throw ConfigError("fixed allocation counts must be nonnegative");
      }
      sum += counts[i];
    }
    if (sum != total) {
      throw ConfigError("fixed allocation sums to " + std::to_string(sum) +
                        ", expected " + std::to_string(total));
    }
    return counts;
  }
  return stream.multinomial(total, group_weights);
}

std::vector<int> allocate_counts(const Model& model, Group g, int total,
                                 const AllocationRule& rule, Stream& stream) {
  return allocate_counts(model.group_indices(g), model.group_weights(g),
                         model.component_count(), total, rule, stream);
}

namespace {

void draw_group(const Model& model, Group g, int total,
                const AllocationRule& rule, std::uint64_t master,
                std::uint64_t replication, Matrix& rows,
                std::vector<int>& labels) {
  const std::uint64_t gtag = g == Group::kTreated ? 0 : 1;
  Stream count_stream =
      Stream::keyed(master, {stream_tag::kCounts, replication, gtag});
  std::vector<int> counts =
      allocate_counts(model, g, total, rule, count_stream);
  std::vector<int> idx = model.group_indices(g);

  rows.resize(total, model.dimension());
  labels.assign(total, -1);
  int at = 0;
  for (size_t i = 0; i < idx.size(); ++i) {
    Stream row_stream = Stream::keyed(
        master, {stream_tag::kRows, replication, gtag,
                 static_cast<std::uint64_t>(idx[i])});
    Matrix block = sample_component(model.component(idx[i]), counts[i],
                                    row_stream);
    rows.middleRows(at, counts[i]) = block;
    std::fill(labels.begin() + at, labels.begin() + at + counts[i], idx[i]);
    at += counts[i];
  }

  Stream shuffle_stream =
      Stream::keyed(master, {stream_tag::kShuffle, replication, gtag});
  std::vector<int> perm = shuffle_stream.permutation(total);
  Matrix shuffled(total, model.dimension());
  std::vector<int> shuffled_labels(total);
  for (int i = 0; i < total; ++i) {
    shuffled.row(i) = rows.row(perm[i]);
    shuffled_labels[i] = labels[perm[i]];
  }
  rows.swap(shuffled);
  labels.swap(shuffled_labels);
}

}  // namespace

Sample draw_panel(const Model& model, int n_treated, int n_control,
                  const AllocationRule& rule, std::uint64_t master_seed,
                  std::uint64_t replication) {
  if (n_treated < 1 || n_control < 1) {
    throw ConfigError("panel needs at least one unit in each group");
  }
  Sample sample;
  sample.master_seed = master_seed;
  sample.replication = replication;
  draw_group(model, Group::kTreated, n_treated, rule, master_seed,
             replication, sample.treated, sample.treated_component);
  draw_group(model, Group::kControl, n_control, rule, master_seed,
             replication, sample.control, sample.control_component);
  return sample;
}

}  // namespace dmpes
