#include <cmath>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "doctest.h"
#include "mvplc/ghk.hpp"
#include "mvplc/rng.hpp"

using namespace mvplc;
using doctest::Approx;

namespace {

// P(Z1 <= 0, Z2 <= 0) for Z = L e with logistic-link e, by 1-D quadrature.
double matched_link_orthant(double eps) {
  const double s = std::sqrt(1 - eps * eps);
  auto f = [&](double e1) { return approx_pdf(e1) * approx_cdf(-eps * e1 / s); };
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, -kInf, 0.0, 15, 1e-12);
}

Matrix chol2(double eps) {
  Matrix l = Matrix::identity(2);
  l(1, 0) = eps;
  l(1, 1) = std::sqrt(1 - eps * eps);
  return l;
}

}  // namespace

TEST_CASE("identity correlation gives the exact product") {
  const GhkNodes nodes(3, 256, 1);
  BoxBounds box{{-kInf, -kInf, -kInf}, {0.0, 0.0, 0.0}};
  CHECK(box_probability(box, Matrix::identity(3), nodes).probability == 0.125);
  BoxBounds box2{{-0.3, -kInf, 1.0}, {kInf, 0.7, 2.5}};
  const double expect = (1 - approx_cdf(-0.3)) * approx_cdf(0.7) * (approx_cdf(2.5) - approx_cdf(1.0));
  CHECK(std::fabs(box_probability(box2, Matrix::identity(3), nodes).probability - expect) < 1e-12);
}

TEST_CASE("two-dimensional orthant under the matched link") {
  const double oracle = matched_link_orthant(0.5);
  CHECK(oracle == Approx(0.3300).epsilon(0.01));  // close to the normal-theory 1/3
  const GhkNodes nodes(2, 1024, 20240601);
  BoxBounds box{{-kInf, -kInf}, {0.0, 0.0}};
  CHECK(std::fabs(box_probability(box, chol2(0.5), nodes).probability - oracle) < 5e-3);
}

TEST_CASE("probabilities over a partition sum to one") {
  const GhkNodes nodes(2, 256, 3);
  const Matrix l = chol2(-0.6);
  const double cuts[] = {-kInf, -0.4, 0.8, kInf};
  double total = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      BoxBounds b{{cuts[i], cuts[j]}, {cuts[i + 1], cuts[j + 1]}};
      total += box_probability(b, l, nodes).probability;
    }
  CHECK(total == Approx(1.0).epsilon(1e-9));
}

TEST_CASE("gradient matches finite differences") {
  const GhkNodes nodes(3, 64, 9);
  Matrix l = Matrix::identity(3);
  l(1, 0) = 0.3;
  l(1, 1) = std::sqrt(1 - 0.09);
  l(2, 0) = -0.2;
  l(2, 1) = 0.4;
  l(2, 2) = std::sqrt(1 - 0.04 - 0.16);
  BoxBounds box{{-0.5, -kInf, 0.2}, {1.0, 0.3, kInf}};
  GhkGradient g;
  const double p = box_probability(box, l, nodes, &g).probability;
  const double h = 1e-6;
  for (std::size_t t = 0; t < 3; ++t) {
    if (std::isfinite(box.lower[t])) {
      BoxBounds up = box, dn = box;
      up.lower[t] += h;
      dn.lower[t] -= h;
      const double fd = (box_probability(up, l, nodes).probability - box_probability(dn, l, nodes).probability) / (2 * h);
      CHECK(g.lower[t] == Approx(fd).epsilon(1e-5));
    }
    if (std::isfinite(box.upper[t])) {
      BoxBounds up = box, dn = box;
      up.upper[t] += h;
      dn.upper[t] -= h;
      const double fd = (box_probability(up, l, nodes).probability - box_probability(dn, l, nodes).probability) / (2 * h);
      CHECK(g.upper[t] == Approx(fd).epsilon(1e-5));
    }
  }
  for (std::size_t i = 1; i < 3; ++i)
    for (std::size_t j = 0; j < i; ++j) {
      Matrix up = l, dn = l;
      up(i, j) += h;
      dn(i, j) -= h;
      const double fd = (box_probability(box, up, nodes).probability - box_probability(box, dn, nodes).probability) / (2 * h);
      CHECK(g.chol(i, j) == Approx(fd).epsilon(1e-5));
    }
  CHECK(p > 0.0);
}

TEST_CASE("node sets are deterministic per seed") {
  const GhkNodes a(3, 16, 42), b(3, 16, 42), c(3, 16, 43);
  CHECK(a(5, 1) == b(5, 1));
  CHECK(a(5, 1) != c(5, 1));
  for (std::size_t m = 0; m < 16; ++m)
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(a(m, j) > 0.0);
      CHECK(a(m, j) < 1.0);
    }
}
