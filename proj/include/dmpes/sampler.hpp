#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "dmpes/model.hpp"

namespace dmpes {

/// Well-separated stream purposes used when deriving substream seeds.
namespace stream_tag {
inline constexpr std::uint64_t kCounts = 1;
inline constexpr std::uint64_t kRows = 2;
inline constexpr std::uint64_t kShuffle = 3;
inline constexpr std::uint64_t kSubsample = 4;
inline constexpr std::uint64_t kDirections = 5;
inline constexpr std::uint64_t kBootstrap = 6;
inline constexpr std::uint64_t kMaps = 7;
inline constexpr std::uint64_t kPanel = 8;
}  // namespace stream_tag

std::uint64_t mix_seed(std::uint64_t state);

/// Pseudo-random stream whose seed is a pure function of a master seed and a
/// list of integer keys. Any draw sequence is therefore reproducible from
/// the keys alone, independent of scheduling or worker count.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : engine_(seed) {}

  static Stream keyed(std::uint64_t master,
                      std::initializer_list<std::uint64_t> keys) {
    std::uint64_t state = mix_seed(master ^ 0x9e3779b97f4a7c15ULL);
    for (std::uint64_t k : keys) state = mix_seed(state ^ mix_seed(k));
    return Stream(state);
  }

  std::mt19937_64& engine() { return engine_; }

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double chi_squared(double df) {
    std::chi_squared_distribution<double> dist(df);
    return dist(engine_);
  }
  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) {
    std::uniform_int_distribution<std::uint64_t> dist(0, bound - 1);
    return dist(engine_);
  }
  int binomial(int n, double prob) {
    if (n <= 0) return 0;
    std::binomial_distribution<int> dist(n, prob);
    return dist(engine_);
  }

  /// Multinomial draw via sequential binomials; deterministic given the
  /// stream state and probability order.
  std::vector<int> multinomial(int n, const Vector& probs);

  /// Uniform random permutation of 0..n-1 (Fisher-Yates).
  std::vector<int> permutation(int n);

  /// Uniform unit vector in dimension p.
  Vector unit_vector(Eigen::Index p);

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// How replicated panels split group sizes across mixture components.
struct AllocationRule {
  enum class Kind { kProportional, kFixed };
  Kind kind = Kind::kProportional;
  /// Per-component counts indexed like the model components; entries for
  /// the other group are ignored. Required for kFixed.
  std::vector<int> fixed_counts;
};

/// One drawn panel of treated and control units with component provenance.
struct Sample {
  Matrix treated;               // n_treated x p
  Matrix control;               // n_control x p
  std::vector<int> treated_component;
  std::vector<int> control_component;
  std::uint64_t master_seed = 0;
  std::uint64_t replication = 0;

  Eigen::Index dim() const { return treated.cols(); }
  int n_treated() const { return static_cast<int>(treated.rows()); }
  int n_control() const { return static_cast<int>(control.rows()); }
  const Matrix& rows(Group g) const {
    return g == Group::kTreated ? treated : control;
  }
  const std::vector<int>& component_labels(Group g) const {
    return g == Group::kTreated ? treated_component : control_component;
  }
};

/// Standardized draw from the radial law in dimension p: zero mean,
/// identity covariance, spherical symmetry.
Vector radial_pull(const RadialLaw& law, Eigen::Index p, Stream& stream);

/// Draws n independent rows from one ellipsoidal component with covariance
/// exactly equal to the configured matrix.
Matrix sample_component(const Component& component, int n, Stream& stream);

/// Resolves per-component counts for one group under the allocation rule.
/// Proportional allocation consumes randomness from `stream`.
std::vector<int> allocate_counts(const Model& model, Group g, int total,
                                 const AllocationRule& rule, Stream& stream);

/// Same, for a group given by explicit component indices and renormalized
/// weights; `component_count` sizes the fixed-count lookup.
std::vector<int> allocate_counts(const std::vector<int>& group_indices,
                                 const Vector& group_weights,
                                 int component_count, int total,
                                 const AllocationRule& rule, Stream& stream);

/// Draws a full panel. Rows within each group are shuffled so position
/// carries no component information; the result depends only on
/// (master_seed, replication) and the model.
Sample draw_panel(const Model& model, int n_treated, int n_control,
                  const AllocationRule& rule, std::uint64_t master_seed,
                  std::uint64_t replication);

}  // namespace dmpes
