#include "mvplc/math.hpp"

#include <algorithm>
#include <array>

#include <boost/math/distributions/normal.hpp>

namespace mvplc {

double std_normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw MathError("std_normal_quantile: p must be in (0,1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

namespace {

// Half-rules of the 6-, 12- and 20-point Gauss-Legendre formulas on [-1, 1].
constexpr std::array<double, 3> kX6 = {-0.9324695142031522, -0.6612093864662647, -0.2386191860831970};
constexpr std::array<double, 3> kW6 = {0.1713244923791705, 0.3607615730481384, 0.4679139345726904};
constexpr std::array<double, 6> kX12 = {-0.9815606342467191, -0.9041172563704750, -0.7699026741943050,
                                        -0.5873179542866171, -0.3678314989981802, -0.1252334085114692};
constexpr std::array<double, 6> kW12 = {0.4717533638651177e-1, 0.1069393259953183, 0.1600783285433464,
                                        0.2031674267230659,    0.2334925365383547, 0.2491470458134029};
constexpr std::array<double, 10> kX20 = {-0.9931285991850949, -0.9639719272779138, -0.9122344282513259,
                                         -0.8391169718222188, -0.7463319064601508, -0.6360536807265150,
                                         -0.5108670019508271, -0.3737060887154196, -0.2277858511416451,
                                         -0.7652652113349733e-1};
constexpr std::array<double, 10> kW20 = {0.1761400713915212e-1, 0.4060142980038694e-1, 0.6267204833410906e-1,
                                         0.8327674157670475e-1, 0.1019301198172404,    0.1181945319615184,
                                         0.1316886384491766,    0.1420961093183821,    0.1491729864726037,
                                         0.1527533871307259};

// P(X > h, Y > k) for correlation r (Genz 2004, BVNU).
double upper_orthant(double h, double k, double r) {
  std::span<const double> x, w;
  if (std::fabs(r) < 0.3) {
    x = kX6;
    w = kW6;
  } else if (std::fabs(r) < 0.75) {
    x = kX12;
    w = kW12;
  } else {
    x = kX20;
    w = kW20;
  }
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double hk = h * k;
  double bvn = 0.0;
  if (std::fabs(r) < 0.925) {
    const double hs = 0.5 * (h * h + k * k);
    const double asr = std::asin(r);
    for (std::size_t i = 0; i < x.size(); ++i) {
      double sn = std::sin(asr * (x[i] + 1.0) / 2.0);
      bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      sn = std::sin(asr * (1.0 - x[i]) / 2.0);
      bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
    }
    return bvn * asr / (2.0 * two_pi) + std_normal_cdf(-h) * std_normal_cdf(-k);
  }
  if (r < 0) {
    k = -k;
    hk = -hk;
  }
  if (std::fabs(r) < 1.0) {
    const double as = (1.0 - r) * (1.0 + r);
    double a = std::sqrt(as);
    const double bs = (h - k) * (h - k);
    const double c = (4.0 - hk) / 8.0;
    const double d = (12.0 - hk) / 16.0;
    bvn = a * std::exp(-(bs / as + hk) / 2.0) * (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as * as / 5.0);
    if (hk > -160.0) {
      const double b = std::sqrt(bs);
      bvn -= std::exp(-hk / 2.0) * std::sqrt(two_pi) * std_normal_cdf(-b / a) * b *
             (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
    }
    a /= 2.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      for (double xi : {x[i], -x[i]}) {
        const double xs = (a * (xi + 1.0)) * (a * (xi + 1.0));
        const double rs = std::sqrt(1.0 - xs);
        const double term = std::exp(-(bs / xs + hk) / 2.0) *
                            (std::exp(-hk * xs / (2.0 * (1.0 + rs) * (1.0 + rs))) / rs - (1.0 + c * xs * (1.0 + d * xs)));
        bvn += a * w[i] * term;
      }
    }
    bvn = -bvn / two_pi;
  }
  if (r > 0) return bvn + std_normal_cdf(-std::max(h, k));
  bvn = -bvn;
  if (k > h) {
    if (h < 0)
      bvn += std_normal_cdf(k) - std_normal_cdf(h);
    else
      bvn += std_normal_cdf(-h) - std_normal_cdf(-k);
  }
  return bvn;
}

}  // namespace

double bivariate_normal_cdf(double a, double b, double r) {
  if (!(std::fabs(r) < 1.0)) throw MathError("bivariate_normal_cdf: |r| must be < 1");
  if (std::isnan(a) || std::isnan(b)) throw MathError("bivariate_normal_cdf: NaN bound");
  if (a == -kInf || b == -kInf) return 0.0;
  if (a == kInf) return std_normal_cdf(b);
  if (b == kInf) return std_normal_cdf(a);
  return std::clamp(upper_orthant(-a, -b, r), 0.0, 1.0);
}

CorrelationMatrix::CorrelationMatrix(Matrix m) : m_(std::move(m)) {
  const std::size_t n = m_.dim();
  for (std::size_t i = 0; i < n; ++i) {
    if (std::fabs(m_(i, i) - 1.0) > 1e-12) throw MathError("correlation matrix: diagonal must be 1");
    for (std::size_t j = 0; j < i; ++j) {
      if (std::fabs(m_(i, j) - m_(j, i)) > 1e-12) throw MathError("correlation matrix: not symmetric");
    }
  }
  (void)cholesky(m_);
}

Matrix cholesky(const CorrelationMatrix& psi) { return cholesky(psi.matrix()); }

CorrelationMatrix pool_correlation(const CorrelationMatrix& global, const CorrelationMatrix& deviation, double beta) {
  if (global.dim() != deviation.dim()) throw MathError("pool_correlation: dimension mismatch");
  if (!(beta >= 0.0 && beta <= 1.0)) throw MathError("pool_correlation: beta must be in [0,1]");
  if (beta == 0.0) return global;
  if (beta == 1.0) return deviation;
  return CorrelationMatrix(pool_correlation(global.matrix(), deviation.matrix(), beta));
}

CutpointVector::CutpointVector(std::vector<double> c) : c_(std::move(c)) {
  if (c_.empty()) throw MathError("cutpoints: need at least one cutpoint");
  for (double v : c_)
    if (!std::isfinite(v)) throw MathError("cutpoints: non-finite value");
  for (std::size_t k = 1; k < c_.size(); ++k)
    if (!(c_[k] > c_[k - 1])) throw MathError("cutpoints: values must be strictly increasing");
}

std::vector<double> cutpoints_to_probs(const CutpointVector& c, double anchor) {
  return cutpoints_to_probs<double>(c.values(), anchor);
}

std::vector<double> probs_to_cutpoints(std::span<const double> probs, double anchor) {
  if (probs.size() < 2) throw MathError("probs_to_cutpoints: need at least two categories");
  for (double p : probs)
    if (!(p > 0.0)) throw MathError("probs_to_cutpoints: probabilities must be positive");
  const std::size_t n = probs.size();
  // Upper tails, so cutpoints near 1 keep their precision.
  std::vector<double> tail(n, 0.0);
  for (std::size_t k = n - 1; k-- > 0;) tail[k] = tail[k + 1] + probs[k + 1];
  std::vector<double> c;
  double cum = 0.0;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    cum += probs[k];
    c.push_back((cum <= 0.5 ? approx_quantile(cum) : -approx_quantile(tail[k])) + anchor);
  }
  return c;
}

double induced_dirichlet_logdensity(const CutpointVector& c, std::span<const double> alpha, double anchor) {
  return induced_dirichlet_logdensity<double>(c.values(), alpha, anchor);
}

double polychoric_to_product_moment(double a, double b, double eps) {
  if (!(std::fabs(eps) < 1.0)) throw MathError("polychoric_to_product_moment: |eps| must be < 1");
  const double pa = std_normal_cdf(a);
  const double pb = std_normal_cdf(b);
  if (pa <= 0.0 || pa >= 1.0 || pb <= 0.0 || pb >= 1.0)
    throw MathError("polychoric_to_product_moment: degenerate margin");
  const double joint = bivariate_normal_cdf(a, b, eps);
  return (joint - pa * pb) / std::sqrt(pa * (1.0 - pa) * pb * (1.0 - pb));
}

double pairwise_sum(std::span<const double> x) {
  if (x.size() <= 8) {
    double s = 0.0;
    for (double v : x) s += v;
    return s;
  }
  const std::size_t half = x.size() / 2;
  return pairwise_sum(x.first(half)) + pairwise_sum(x.subspan(half));
}

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw MathError("quantile: no data");
  if (!(p >= 0.0 && p <= 1.0)) throw MathError("quantile: probability outside [0, 1]");
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

double quantile(std::span<const double> x, double p) {
  std::vector<double> v(x.begin(), x.end());
  std::sort(v.begin(), v.end());
  return quantile_sorted(v, p);
}

}  // namespace mvplc
