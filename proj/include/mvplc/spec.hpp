#ifndef MVPLC_SPEC_HPP
#define MVPLC_SPEC_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mvplc/data.hpp"

namespace mvplc {

struct SpecError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Class index: 0 = non-diseased, 1 = diseased.
inline constexpr std::size_t kClasses = 2;

/// Test pairs whose latent results are conditionally dependent (same pattern
/// in both classes). Pairs outside the mask have zero within-study correlation.
class CorrelationMask {
 public:
  CorrelationMask() = default;
  explicit CorrelationMask(std::size_t num_tests) : n_(num_tests), free_(num_tests * num_tests, false) {}

  static CorrelationMask none(std::size_t n) { return CorrelationMask(n); }
  static CorrelationMask all(std::size_t n);

  void set(std::size_t i, std::size_t j, bool on = true);
  bool operator()(std::size_t i, std::size_t j) const { return i != j && free_[i * n_ + j]; }

  std::size_t dim() const { return n_; }
  std::size_t num_free() const;
  bool empty() const { return num_free() == 0; }
  /// Free pairs (i > j) in row-major order of the lower triangle.
  std::vector<std::pair<std::size_t, std::size_t>> free_pairs() const;
  /// Size of the largest group of tests connected through free pairs.
  std::size_t largest_block() const;

  /// Throws SpecError unless every zero pair also has a structurally zero
  /// Cholesky entry, which is what lets the row-wise Cholesky transform
  /// represent the zero pattern exactly.
  void validate() const;

 private:
  std::size_t n_ = 0;
  std::vector<bool> free_;
};

struct NormalPrior {
  double location = 0.0;
  double scale = 1.0;
};

struct PriorSpec {
  /// Per test, per class: normal prior on the summary latent mean mu.
  std::vector<std::array<NormalPrior, kClasses>> mu;
  /// Per test, per class: half-normal N>=0(0, scale) on the between-study SD.
  std::vector<std::array<double, kClasses>> sigma_scale;
  /// rho_t = tanh(x), x ~ N(0, rho_scale).
  double rho_scale = 0.5;
  /// LKJ concentration for the global and study-deviation correlation matrices.
  double lkj_eta = 1.0;
  /// Dirichlet magnitude kappa ~ N>=0(0, kappa_scale).
  double kappa_scale = 50.0;
  /// Prevalence p_s ~ Beta(a, b).
  double prevalence_a = 1.0;
  double prevalence_b = 1.0;
};

struct ModelSpec {
  std::vector<TestDefinition> tests;
  /// Per test: pinned perfect reference (mu = -5 / +5, sigma = 0).
  std::vector<bool> perfect;
  /// The reference (gold standard) test; its class means are ordered
  /// mu[1] > mu[0] when sampled, which fixes the class labels.
  std::size_t reference_test = 0;
  CorrelationMask mask;
  PriorSpec priors;
  /// GHK node count and the seed of the node-set scramble.
  int ghk_nodes = 256;
  std::uint64_t ghk_seed = 20240601;

  std::size_t num_tests() const { return tests.size(); }
  bool is_perfect(std::size_t t) const { return perfect[t]; }
  bool conditional_dependence() const { return !mask.empty(); }
  void validate() const;
};

inline constexpr double kPerfectMean = 5.0;

}  // namespace mvplc

#endif  // MVPLC_SPEC_HPP
