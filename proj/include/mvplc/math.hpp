#ifndef MVPLC_MATH_HPP
#define MVPLC_MATH_HPP

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvplc/ad.hpp"

namespace mvplc {

struct MathError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Slope of the logistic approximation to the standard normal CDF.
inline constexpr double kLinkScale = 1.702;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Scalar helpers (double); Var overloads live in mvplc::ad and are found by ADL.

inline double inv_logit(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
inline double logit(double p) { return std::log(p / (1.0 - p)); }
inline double log_inv_logit(double x) {
  if (x >= 0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}
inline double log_sum_exp(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = a > b ? a : b;
  return m + std::log1p(std::exp(-std::fabs(a - b)));
}

// ---------------------------------------------------------------------------
// Approximate probit link: Phi'(x) = 1 / (1 + exp(-1.702 x)).

template <class T>
T approx_cdf(const T& x) {
  return inv_logit(kLinkScale * x);
}
inline double approx_pdf(double x) {
  const double p = inv_logit(kLinkScale * x);
  return kLinkScale * p * (1.0 - p);
}
inline double approx_quantile(double p) { return logit(p) / kLinkScale; }
template <class T>
T log_approx_cdf(const T& x) {
  return log_inv_logit(kLinkScale * x);
}

// Exact standard normal; used for the polychoric conversion and as a test oracle.
inline double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
inline double std_normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
double std_normal_quantile(double p);

/// P(X <= a, Y <= b) for a standard bivariate normal with correlation r.
/// Fixed-order Gauss-Legendre quadrature of the single-integral (Genz) reduction.
double bivariate_normal_cdf(double a, double b, double r);

// ---------------------------------------------------------------------------
// Dense square matrix, row-major.

template <class T>
class SquareMatrix {
 public:
  SquareMatrix() = default;
  explicit SquareMatrix(std::size_t n, const T& fill = T(0.0)) : n_(n), data_(n * n, fill) {}

  static SquareMatrix identity(std::size_t n) {
    SquareMatrix m(n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1.0);
    return m;
  }

  std::size_t dim() const { return n_; }
  T& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }
  std::span<const T> data() const { return data_; }

 private:
  std::size_t n_ = 0;
  std::vector<T> data_;
};

using Matrix = SquareMatrix<double>;

/// Symmetric, unit-diagonal, positive-definite matrix.
class CorrelationMatrix {
 public:
  /// Validates the invariants; throws MathError otherwise.
  explicit CorrelationMatrix(Matrix m);
  static CorrelationMatrix identity(std::size_t n) { return CorrelationMatrix(Matrix::identity(n)); }

  std::size_t dim() const { return m_.dim(); }
  double operator()(std::size_t i, std::size_t j) const { return m_(i, j); }
  const Matrix& matrix() const { return m_; }

 private:
  Matrix m_;
};

/// Lower-triangular Cholesky factor. Throws MathError when the input is not
/// positive definite.
template <class T>
SquareMatrix<T> cholesky(const SquareMatrix<T>& a) {
  using std::sqrt;
  const std::size_t n = a.dim();
  SquareMatrix<T> l(n);
  for (std::size_t j = 0; j < n; ++j) {
    T d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(value_of(d) > 0.0)) throw MathError("cholesky: matrix is not positive definite");
    l(j, j) = sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      T s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return l;
}
Matrix cholesky(const CorrelationMatrix& psi);

/// (1 - beta) * global + beta * deviation, elementwise.
template <class T, class U>
SquareMatrix<T> pool_correlation(const SquareMatrix<T>& global, const SquareMatrix<T>& deviation, const U& beta) {
  const std::size_t n = global.dim();
  SquareMatrix<T> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out(i, i) = T(1.0);
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) out(i, j) = (1.0 - beta) * global(i, j) + beta * deviation(i, j);
  }
  return out;
}
CorrelationMatrix pool_correlation(const CorrelationMatrix& global, const CorrelationMatrix& deviation, double beta);

// ---------------------------------------------------------------------------
// Ordinal cutpoints.

/// Strictly increasing latent cutpoints C_1 < ... < C_{K-1}.
class CutpointVector {
 public:
  explicit CutpointVector(std::vector<double> c);
  std::size_t num_categories() const { return c_.size() + 1; }
  std::span<const double> values() const { return c_; }
  double operator[](std::size_t k) const { return c_[k]; }

 private:
  std::vector<double> c_;
};

/// P_k = Phi'(c_k - anchor) - Phi'(c_{k-1} - anchor) with c_0 = -inf, c_K = +inf.
template <class T, class A>
std::vector<T> cutpoints_to_probs(std::span<const T> c, const A& anchor) {
  std::vector<T> p;
  p.reserve(c.size() + 1);
  T prev = T(0.0);
  for (std::size_t k = 0; k < c.size(); ++k) {
    T cur = approx_cdf(T(c[k] - anchor));
    p.push_back(cur - prev);
    prev = cur;
  }
  p.push_back(1.0 - prev);
  return p;
}
std::vector<double> cutpoints_to_probs(const CutpointVector& c, double anchor);

/// Inverse of cutpoints_to_probs: cumulative sums through the link quantile.
std::vector<double> probs_to_cutpoints(std::span<const double> probs, double anchor);

/// log Dirichlet(p(c) | alpha) + log|d p_{1..K-1} / d c|, the Jacobian being
/// lower-bidiagonal with diagonal entries equal to the link density at c_k - anchor.
template <class T, class A>
T induced_dirichlet_logdensity(std::span<const T> c, std::span<const T> alpha, const A& anchor) {
  using std::lgamma;
  using std::log;
  const std::size_t k_minus_1 = c.size();
  if (alpha.size() != k_minus_1 + 1) throw MathError("induced_dirichlet: alpha must have K entries");
  for (std::size_t k = 1; k < k_minus_1; ++k)
    if (!(value_of(c[k]) > value_of(c[k - 1]))) throw MathError("induced_dirichlet: cutpoints not increasing");
  for (const auto& a : alpha)
    if (!(value_of(a) > 0.0)) throw MathError("induced_dirichlet: concentration must be positive");

  T alpha_sum = alpha[0];
  for (std::size_t k = 1; k < alpha.size(); ++k) alpha_sum += alpha[k];
  T out = lgamma(alpha_sum);
  const std::vector<T> p = cutpoints_to_probs(c, anchor);
  for (std::size_t k = 0; k < alpha.size(); ++k) out += (alpha[k] - 1.0) * log(p[k]) - lgamma(alpha[k]);
  for (std::size_t k = 0; k < k_minus_1; ++k) {
    // log link density: log(1.702) + log F + log(1 - F)
    const T x = T(c[k] - anchor);
    out += std::log(kLinkScale) + log_approx_cdf(x) + log_approx_cdf(T(-x));
  }
  return out;
}
double induced_dirichlet_logdensity(const CutpointVector& c, std::span<const double> alpha, double anchor);

// ---------------------------------------------------------------------------

/// Pearson correlation of the indicators 1{X > a} and 1{Y > b} when (X, Y) is
/// standard bivariate normal with latent correlation eps.
double polychoric_to_product_moment(double a, double b, double eps);

/// Sum in a fixed pairwise-tree order, independent of thread count.
double pairwise_sum(std::span<const double> x);

/// Quantile of sorted data by linear interpolation between order statistics:
/// position h = (n - 1) p, value x[floor h] + (h - floor h)(x[floor h + 1] - x[floor h]).
double quantile_sorted(std::span<const double> sorted, double p);
/// Same on unsorted data (copied and sorted).
double quantile(std::span<const double> x, double p);

}  // namespace mvplc

#endif  // MVPLC_MATH_HPP
