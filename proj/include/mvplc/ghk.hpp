#ifndef MVPLC_GHK_HPP
#define MVPLC_GHK_HPP

// Sequential-conditioning (GHK) estimate of P(L e in box) where the
// innovations e_t are independent with CDF Phi' (the logistic link), so each
// conditional step truncates a Phi' variate. Deterministic for a fixed node set.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mvplc/math.hpp"

namespace mvplc {

inline constexpr double kProbabilityFloor = 1e-300;

/// Digitally shifted Sobol points in (0,1)^dim.
class GhkNodes {
 public:
  GhkNodes(std::size_t dim, std::size_t count, std::uint64_t seed);

  std::size_t dim() const { return dim_; }
  std::size_t count() const { return count_; }
  double operator()(std::size_t m, std::size_t j) const { return u_[m * dim_ + j]; }
  std::span<const double> point(std::size_t m) const { return {u_.data() + m * dim_, dim_}; }

 private:
  std::size_t dim_, count_;
  std::vector<double> u_;
};

/// Box relative to the latent mean: lower[t] < upper[t], either may be infinite.
struct BoxBounds {
  std::vector<double> lower, upper;
};

struct GhkResult {
  double probability = 0.0;
  bool floored = false;
};

/// Derivatives of the probability with respect to the finite bounds and the
/// lower triangle (including the diagonal) of L.
struct GhkGradient {
  std::vector<double> lower, upper;
  Matrix chol;
};

/// When L is diagonal every node gives the same path, so a single path is
/// used and the result is the exact product of interval probabilities.
GhkResult box_probability(const BoxBounds& box, const Matrix& chol, const GhkNodes& nodes,
                          GhkGradient* grad = nullptr);

}  // namespace mvplc

#endif  // MVPLC_GHK_HPP
