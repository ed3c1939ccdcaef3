#include "mvplc/ghk.hpp"

#include <boost/random/sobol.hpp>

#include "mvplc/rng.hpp"

namespace mvplc {

GhkNodes::GhkNodes(std::size_t dim, std::size_t count, std::uint64_t seed) : dim_(dim), count_(count) {
  if (count == 0) throw MathError("GHK: node count must be positive");
  if (dim == 0) return;
  u_.resize(dim * count);
  boost::random::sobol engine(static_cast<unsigned>(dim));
  std::vector<std::uint64_t> shift(dim);
  CounterRng rng(seed, 0x6768u);
  for (auto& s : shift) s = rng();
  for (std::size_t m = 0; m < count; ++m)
    for (std::size_t j = 0; j < dim; ++j) {
      const std::uint64_t v = static_cast<std::uint64_t>(engine()) ^ shift[j];
      u_[m * dim + j] = (static_cast<double>(v >> 11) + 0.5) * 0x1.0p-53;
    }
}

namespace {

struct Step {
  double a, b;        // standardized bounds
  double pa, pb;      // link densities at a and b
  double q;           // interval probability
  double w;           // node coordinate
  double e;           // drawn innovation
  double dens_e;      // link density at e
  double ltt;
};

bool is_diagonal(const Matrix& l) {
  for (std::size_t i = 0; i < l.dim(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (l(i, j) != 0.0) return false;
  return true;
}

}  // namespace

GhkResult box_probability(const BoxBounds& box, const Matrix& chol, const GhkNodes& nodes, GhkGradient* grad) {
  const std::size_t n = box.lower.size();
  if (box.upper.size() != n || chol.dim() != n) throw MathError("GHK: bounds and factor dimensions differ");
  if (nodes.dim() + 1 < n) throw MathError("GHK: node set has too few dimensions");
  const std::size_t paths = is_diagonal(chol) ? 1 : nodes.count();
  const double inv_paths = 1.0 / static_cast<double>(paths);

  if (grad) {
    grad->lower.assign(n, 0.0);
    grad->upper.assign(n, 0.0);
    grad->chol = Matrix(n, 0.0);
  }
  std::vector<Step> st(n);
  std::vector<double> suffix(n + 1), prefix(n), e_bar(n);
  double total = 0.0;

  std::vector<double> inv_ltt(n);
  for (std::size_t t = 0; t < n; ++t) inv_ltt[t] = 1.0 / chol(t, t);
  // Link CDF that skips the exponential at infinite bounds.
  auto cdf = [](double x) { return x == kInf ? 1.0 : (x == -kInf ? 0.0 : approx_cdf(x)); };

  // Conditions the step at t on the innovations already drawn.
  auto bounds = [&](std::size_t t) {
    Step& s = st[t];
    double mean = 0.0;
    for (std::size_t j = 0; j < t; ++j) mean += chol(t, j) * st[j].e;
    s.ltt = chol(t, t);
    s.a = box.lower[t] == -kInf ? -kInf : (box.lower[t] - mean) * inv_ltt[t];
    s.b = box.upper[t] == kInf ? kInf : (box.upper[t] - mean) * inv_ltt[t];
    // Work in the upper tail when the interval lies right of zero so that
    // probabilities near one never lose their complement.
    const bool reflect = s.a > 0.0;
    const double fa = reflect ? cdf(-s.a) : cdf(s.a);
    const double fb = reflect ? cdf(-s.b) : cdf(s.b);
    s.pa = kLinkScale * fa * (1.0 - fa);
    s.pb = kLinkScale * fb * (1.0 - fb);
    s.q = reflect ? fa - fb : fb - fa;
    return std::pair{fa, reflect};
  };
  auto draw = [&](std::size_t t, std::size_t m, double fa, bool reflect) {
    Step& s = st[t];
    s.w = nodes(m, t);
    const double f = fa + (reflect ? -1.0 : 1.0) * s.w * s.q;
    s.e = reflect ? -approx_quantile(f) : approx_quantile(f);
    s.dens_e = kLinkScale * f * (1.0 - f);
  };

  // The first step has no conditioning, so it is shared by every path.
  const auto [fa0, reflect0] = bounds(0);
  if (st[0].q > 0.0) {
    for (std::size_t m = 0; m < paths; ++m) {
      double prod = st[0].q;
      bool empty = false;
      if (n > 1) draw(0, m, fa0, reflect0);
      for (std::size_t t = 1; t < n; ++t) {
        const auto [fa, reflect] = bounds(t);
        if (!(st[t].q > 0.0)) {
          empty = true;
          break;
        }
        prod *= st[t].q;
        if (t + 1 < n) draw(t, m, fa, reflect);
      }
      if (empty) continue;
      total += prod;
      if (!grad) continue;

      suffix[n] = 1.0;
      for (std::size_t t = n; t-- > 0;) suffix[t] = suffix[t + 1] * st[t].q;
      double run = 1.0;
      for (std::size_t t = 0; t < n; ++t) {
        prefix[t] = run;
        run *= st[t].q;
        e_bar[t] = 0.0;
      }
      for (std::size_t t = n; t-- > 0;) {
        const Step& s = st[t];
        const double q_bar = prefix[t] * suffix[t + 1] * inv_paths;
        double a_bar = -q_bar * s.pa;
        double b_bar = q_bar * s.pb;
        if (t + 1 < n && e_bar[t] != 0.0) {
          a_bar += e_bar[t] * (1.0 - s.w) * s.pa / s.dens_e;
          b_bar += e_bar[t] * s.w * s.pb / s.dens_e;
        }
        double m_bar = 0.0;
        if (std::isfinite(s.a)) {
          grad->lower[t] += a_bar / s.ltt;
          m_bar -= a_bar / s.ltt;
          grad->chol(t, t) -= a_bar * s.a / s.ltt;
        }
        if (std::isfinite(s.b)) {
          grad->upper[t] += b_bar / s.ltt;
          m_bar -= b_bar / s.ltt;
          grad->chol(t, t) -= b_bar * s.b / s.ltt;
        }
        for (std::size_t j = 0; j < t; ++j) {
          grad->chol(t, j) += m_bar * st[j].e;
          e_bar[j] += m_bar * chol(t, j);
        }
      }
    }
  }

  GhkResult r;
  r.probability = total * inv_paths;
  if (!(r.probability >= kProbabilityFloor)) {
    r.probability = kProbabilityFloor;
    r.floored = true;
    if (grad) {
      grad->lower.assign(n, 0.0);
      grad->upper.assign(n, 0.0);
      grad->chol = Matrix(n, 0.0);
    }
  }
  return r;
}

}  // namespace mvplc
