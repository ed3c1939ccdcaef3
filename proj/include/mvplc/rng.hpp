#ifndef MVPLC_RNG_HPP
#define MVPLC_RNG_HPP

#include <cstdint>
#include <limits>
#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

namespace mvplc {

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based generator: output n is a bijective mix of (key, n). Streams
/// keyed by (seed, stream id) are independent of each other and of how many
/// other streams exist.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : key_(mix64(seed + 0x9e3779b97f4a7c15ULL) ^ mix64(stream * 0xd1b54a32d192ed03ULL + 0x632be59bd9b4e019ULL)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

  /// Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

  double normal() { return std::normal_distribution<double>()(*this); }
  double gamma(double shape) { return std::gamma_distribution<double>(shape, 1.0)(*this); }
  bool bernoulli(double p) { return uniform() < p; }

  /// Dirichlet draw computed in log space, so tiny concentrations cannot
  /// underflow every component to zero. Entries are floored at 1e-12.
  std::vector<double> dirichlet(std::span<const double> alpha) {
    std::vector<double> lg(alpha.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < alpha.size(); ++k) {
      // Gamma(a) = Gamma(a + 1) U^(1/a).
      lg[k] = std::log(gamma(alpha[k] + 1.0)) + std::log(uniform()) / alpha[k];
      mx = std::max(mx, lg[k]);
    }
    double sum = 0.0;
    for (auto& v : lg) sum += v = std::max(std::exp(v - mx), 1e-300);
    double total = 0.0;
    for (auto& v : lg) total += v = std::max(v / sum, 1e-12);
    for (auto& v : lg) v /= total;
    return lg;
  }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace mvplc

#endif  // MVPLC_RNG_HPP
