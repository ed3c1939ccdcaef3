#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "mvplc/math.hpp"
#include "mvplc/rng.hpp"

using namespace mvplc;
using doctest::Approx;

TEST_CASE("logistic link matches the normal CDF closely") {
  CHECK(approx_cdf(0.0) == 0.5);
  CHECK(approx_cdf(5.0) == Approx(1.0 / (1.0 + std::exp(-8.51))).epsilon(1e-14));
  double worst = 0.0;
  for (int i = 0; i <= 100000; ++i) {
    const double x = -8.0 + 16.0 * i / 100000.0;
    worst = std::max(worst, std::fabs(approx_cdf(x) - std_normal_cdf(x)));
  }
  CHECK(worst <= 0.0095);
  CHECK(approx_quantile(approx_cdf(1.3)) == Approx(1.3).epsilon(1e-12));
}

TEST_CASE("standard normal quantile inverts the CDF") {
  for (double p : {1e-10, 0.01, 0.3, 0.5, 0.9, 0.999999})
    CHECK(std_normal_cdf(std_normal_quantile(p)) == Approx(p).epsilon(1e-10));
}

TEST_CASE("bivariate normal CDF") {
  CHECK(bivariate_normal_cdf(0, 0, 0) == Approx(0.25).epsilon(1e-12));
  CHECK(bivariate_normal_cdf(0, 0, 0.5) == Approx(1.0 / 3.0).epsilon(1e-10));
  CHECK(bivariate_normal_cdf(kInf, 0.7, 0.4) == Approx(std_normal_cdf(0.7)).epsilon(1e-12));
  CHECK(bivariate_normal_cdf(-0.3, 1.1, -0.6) ==
        Approx(bivariate_normal_cdf(1.1, -0.3, -0.6)).epsilon(1e-12));  // symmetric in (a, b)
  // Orthant identity for arbitrary r.
  for (double r : {-0.9, -0.2, 0.3, 0.95})
    CHECK(bivariate_normal_cdf(0, 0, r) == Approx(0.25 + std::asin(r) / (2 * std::numbers::pi)).epsilon(1e-9));
}

TEST_CASE("cutpoints to probabilities") {
  auto p2 = cutpoints_to_probs(CutpointVector({0.0}), 0.0);
  CHECK(p2[0] == Approx(0.5));
  CHECK(p2[1] == Approx(0.5));
  auto p3 = cutpoints_to_probs(CutpointVector({-1.0, 1.0}), 0.0);
  CHECK(p3[0] == Approx(approx_cdf(-1.0)));
  CHECK(p3[1] == Approx(approx_cdf(1.0) - approx_cdf(-1.0)));
  CHECK(p3[2] == Approx(1.0 - approx_cdf(1.0)));
  auto p4 = cutpoints_to_probs(CutpointVector({-2.0, 0.1, 0.3, 4.0}), 0.7);
  double sum = 0.0;
  for (double v : p4) sum += v;
  CHECK(std::fabs(sum - 1.0) < 1e-12);
  const auto back = probs_to_cutpoints(p4, 0.7);
  CHECK(back[2] == Approx(0.3).epsilon(1e-10));
  CHECK_THROWS_AS(CutpointVector({1.0, 0.5}), MathError);
}

TEST_CASE("induced Dirichlet density") {
  const std::vector<double> a11 = {1.0, 1.0};
  CHECK(induced_dirichlet_logdensity(CutpointVector({0.0}), a11, 0.0) == Approx(std::log(1.702 / 4.0)));
  // Flat Dirichlet: the density is the Jacobian alone, here the product of link densities
  // times the determinant structure; check it integrates to one on K = 2.
  double integral = 0.0;
  const double h = 1e-3;
  for (double c = -20; c < 20; c += h) integral += std::exp(induced_dirichlet_logdensity(CutpointVector({c}), a11, 0.0)) * h;
  CHECK(integral == Approx(1.0).epsilon(1e-6));
}

TEST_CASE("pooled correlation") {
  Matrix g = Matrix::identity(3), d = Matrix::identity(3);
  g(0, 1) = g(1, 0) = 0.5;
  g(0, 2) = g(2, 0) = -0.3;
  g(1, 2) = g(2, 1) = 0.2;
  d(0, 1) = d(1, 0) = -0.7;
  d(1, 2) = d(2, 1) = 0.4;
  d(0, 2) = d(2, 0) = -0.1;
  const CorrelationMatrix cg(g), cd(d);
  CHECK(pool_correlation(cg, cd, 0.0).matrix().data()[1] == 0.5);
  CHECK(pool_correlation(cg, cd, 1.0).matrix().data()[1] == -0.7);
  // Positive semidefinite at beta = 0.5: a Cholesky factor exists.
  CHECK_NOTHROW(cholesky(pool_correlation(cg, cd, 0.5)));
}

TEST_CASE("Cholesky of a 2x2 correlation") {
  Matrix m = Matrix::identity(2);
  m(0, 1) = m(1, 0) = 0.5;
  const Matrix l = cholesky(CorrelationMatrix(m));
  CHECK(l(0, 0) == Approx(1.0));
  CHECK(l(1, 0) == Approx(0.5));
  CHECK(l(1, 1) == Approx(std::sqrt(0.75)));
  CHECK(l(0, 1) == 0.0);
  const Matrix li = cholesky(CorrelationMatrix::identity(3));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(li(i, j) == (i == j ? 1.0 : 0.0));
}

TEST_CASE("polychoric to product-moment correlation") {
  CHECK(polychoric_to_product_moment(0.3, -0.2, 0.0) == 0.0);
  CHECK(polychoric_to_product_moment(0.0, 0.0, 0.5) == Approx(1.0 / 3.0).epsilon(1e-9));
  // Monte Carlo oracle of the two indicators.
  const double a = 0.4, b = -0.6, eps = 0.7;
  const double rho = polychoric_to_product_moment(a, b, eps);
  CHECK(std::fabs(rho) <= eps);
  CounterRng rng(5, 0);
  const int n = 1000000;
  double sx = 0, sy = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    const double z1 = rng.normal(), z2 = eps * z1 + std::sqrt(1 - eps * eps) * rng.normal();
    const double x = z1 > a, y = z2 > b;
    sx += x;
    sy += y;
    sxy += x * y;
  }
  const double mx = sx / n, my = sy / n;
  const double r = (sxy / n - mx * my) / std::sqrt(mx * (1 - mx) * my * (1 - my));
  CHECK(std::fabs(r - rho) < 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("quantiles interpolate linearly between order statistics") {
  std::vector<double> v(1000);
  for (int i = 0; i < 1000; ++i) v[i] = 999 - i;
  CHECK(quantile(v, 0.0) == 0.0);
  CHECK(quantile(v, 1.0) == 999.0);
  CHECK(quantile(v, 0.5) == Approx(499.5));
  CHECK(quantile(v, 0.025) == Approx(24.975));
  CHECK(quantile(v, 0.975) == Approx(974.025));
}

TEST_CASE("pairwise sum and log-sum-exp") {
  std::vector<double> v(10001, 0.1);
  CHECK(pairwise_sum(v) == Approx(1000.1).epsilon(1e-14));
  CHECK(log_sum_exp(-kInf, 2.0) == 2.0);
  CHECK(log_sum_exp(std::log(2.0), std::log(3.0)) == Approx(std::log(5.0)));
}
