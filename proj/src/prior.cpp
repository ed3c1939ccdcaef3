#include "mvplc/prior.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/tools/roots.hpp>

namespace mvplc {

namespace {

const double kLogSqrt2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

template <class T>
T normal_lpdf(const T& x, double loc, double scale) {
  const T z = (x - loc) / scale;
  return -0.5 * z * z - std::log(scale) - kLogSqrt2Pi;
}

template <class T>
T half_normal_lpdf(const T& x, double scale) {
  return normal_lpdf(x, 0.0, scale) + std::numbers::ln2;
}

}  // namespace

NormalPrior interval_to_probit_normal(double lo, double hi) {
  if (!(lo > 0.0 && lo < hi && hi < 1.0)) throw SpecError("prior interval must satisfy 0 < lo < hi < 1");
  // Via the complement so that symmetric intervals give a location of exactly zero.
  const double qlo = -approx_quantile(1.0 - lo);
  const double qhi = approx_quantile(hi);
  return {0.5 * (qlo + qhi), (qhi - qlo) / 3.92};
}

double half_normal_scale_for_upper(double hi) {
  if (!(hi > 0.0)) throw SpecError("half-normal upper point must be positive");
  return hi / std_normal_quantile(0.9875);
}

double tanh_normal_scale_for_interval(double hi) {
  if (!(hi > 0.0 && hi < 1.0)) throw SpecError("correlation interval endpoint must be in (0,1)");
  return std::atanh(hi) / std_normal_quantile(0.975);
}

double lkj_eta_for_interval(double hi, std::size_t dim) {
  if (!(hi > 0.0 && hi < 1.0)) throw SpecError("correlation interval endpoint must be in (0,1)");
  if (dim < 2) return 1.0;
  const double target = 0.5 * (1.0 + hi);
  auto f = [&](double a) {
    return boost::math::quantile(boost::math::beta_distribution<double>(a, a), 0.975) - target;
  };
  // The quantile falls monotonically in a.
  double lo = 0.1, hi_a = 1e4;
  if (f(lo) < 0.0) throw SpecError("correlation interval too wide for an LKJ prior");
  boost::math::tools::eps_tolerance<double> tol(50);
  std::uintmax_t iters = 200;
  const auto [a0, a1] = boost::math::tools::toms748_solve(f, lo, hi_a, tol, iters);
  const double a = 0.5 * (a0 + a1);
  const double eta = a + 1.0 - 0.5 * static_cast<double>(dim);
  if (!(eta > 0.0)) throw SpecError("correlation interval too wide for an LKJ prior of this dimension");
  return eta;
}

PriorSpec default_priors(std::span<const TestDefinition> tests, std::size_t reference_test,
                         const CorrelationMask& mask) {
  PriorSpec p;
  const NormalPrior vague = interval_to_probit_normal(0.04, 0.96);
  const double sigma = half_normal_scale_for_upper(1.09);
  for (std::size_t t = 0; t < tests.size(); ++t) {
    std::array<NormalPrior, kClasses> mu;
    if (tests[t].is_ordinal()) {
      mu = {NormalPrior{0.0, 1.0}, NormalPrior{0.0, 1.0}};
    } else if (t == reference_test) {
      const NormalPrior se = interval_to_probit_normal(0.49, 0.94);
      const NormalPrior sp = interval_to_probit_normal(0.82, 0.99);
      // Sp = 1 - link(mu0), so the location flips sign.
      mu = {NormalPrior{-sp.location, sp.scale}, se};
    } else {
      mu = {NormalPrior{-vague.location, vague.scale}, vague};
    }
    p.mu.push_back(mu);
    p.sigma_scale.push_back({sigma, sigma});
  }
  p.rho_scale = tanh_normal_scale_for_interval(0.82);
  p.lkj_eta = lkj_eta_for_interval(0.65, std::max<std::size_t>(2, mask.largest_block()));
  p.kappa_scale = 50.0;
  return p;
}

template <class T>
T log_prior(const ParameterLayout& layout, const ParameterState<T>& st) {
  using std::log;
  using std::log1p;
  const ModelSpec& spec = layout.spec();
  const PriorSpec& pr = spec.priors;
  const std::size_t t_count = spec.num_tests();
  const std::size_t s_count = layout.num_studies();
  T lp = T(0.0);

  for (std::size_t t = 0; t < t_count; ++t) {
    if (layout.sampled_index[t] == ParameterLayout::npos) continue;
    for (std::size_t d = 0; d < kClasses; ++d) {
      lp += normal_lpdf(st.mu[t][d], pr.mu[t][d].location, pr.mu[t][d].scale);
      lp += half_normal_lpdf(st.sigma[t][d], pr.sigma_scale[t][d]);
    }
    // rho = tanh(x), x ~ N(0, s): density of rho carries 1 / (1 - rho^2).
    const T& r = st.rho[t];
    const T x = 0.5 * (log1p(r) - log1p(T(-r)));
    lp += normal_lpdf(x, 0.0, pr.rho_scale) - log1p(T(-r * r));
    for (std::size_t s = 0; s < s_count; ++s)
      for (std::size_t d = 0; d < kClasses; ++d) lp += normal_lpdf(st.nu_raw[s][t][d], 0.0, 1.0);
  }

  const double lbeta_p =
      std::lgamma(pr.prevalence_a) + std::lgamma(pr.prevalence_b) - std::lgamma(pr.prevalence_a + pr.prevalence_b);
  for (std::size_t s = 0; s < s_count; ++s) {
    const T& p = st.prevalence[s];
    lp += (pr.prevalence_a - 1.0) * log(p) + (pr.prevalence_b - 1.0) * log1p(T(-p)) - lbeta_p;
  }

  if (layout.dependent() && pr.lkj_eta != 1.0) {
    // Unnormalized LKJ: det(Psi)^(eta - 1) = prod L_ii^(2 (eta - 1)).
    auto lkj = [&](const SquareMatrix<T>& l) {
      T v = T(0.0);
      for (std::size_t i = 1; i < t_count; ++i) v += log(l(i, i));
      return 2.0 * (pr.lkj_eta - 1.0) * v;
    };
    for (std::size_t d = 0; d < kClasses; ++d) {
      lp += lkj(st.chol_g[d]);
      for (std::size_t s = 0; s < s_count; ++s) lp += lkj(st.chol_delta[s][d]);
    }
  }

  for (std::size_t t : layout.ordinal_tests) {
    const std::size_t k_count = static_cast<std::size_t>(spec.tests[t].num_categories);
    for (std::size_t d = 0; d < kClasses; ++d) {
      lp += half_normal_lpdf(st.kappa[t][d], pr.kappa_scale);
      lp += std::lgamma(static_cast<double>(k_count));  // flat Dirichlet on phi
      std::vector<T> alpha(k_count);
      for (std::size_t k = 0; k < k_count; ++k) alpha[k] = st.kappa[t][d] * st.phi[t][d][k];
      for (std::size_t s = 0; s < s_count; ++s)
        lp += induced_dirichlet_logdensity<T, double>(st.cut[s][t][d], alpha, 0.0);
    }
  }
  return lp;
}

template double log_prior<double>(const ParameterLayout&, const ParameterState<double>&);
template ad::Var log_prior<ad::Var>(const ParameterLayout&, const ParameterState<ad::Var>&);

double sample_beta(double a, double b, CounterRng& rng) {
  const double x = rng.gamma(a);
  const double y = rng.gamma(b);
  return x / (x + y);
}

Matrix sample_lkj_correlation(std::size_t dim, double eta, CounterRng& rng) {
  // C-vine: partial correlations of level k are 2 Beta(b, b) - 1 with
  // b = eta + (dim - 1 - k) / 2, then recursively converted to correlations.
  Matrix partial(dim, 0.0), corr = Matrix::identity(dim);
  double b = eta + 0.5 * static_cast<double>(dim - 1);
  for (std::size_t k = 0; k + 1 < dim; ++k) {
    b -= 0.5;
    for (std::size_t i = k + 1; i < dim; ++i) {
      partial(k, i) = 2.0 * sample_beta(b, b, rng) - 1.0;
      double p = partial(k, i);
      for (std::size_t l = k; l-- > 0;)
        p = p * std::sqrt((1.0 - partial(l, i) * partial(l, i)) * (1.0 - partial(l, k) * partial(l, k))) +
            partial(l, i) * partial(l, k);
      corr(k, i) = corr(i, k) = p;
    }
  }
  return corr;
}

Matrix sample_mask_cholesky(const ParameterLayout& layout, CounterRng& rng) {
  // Connected components of the mask, each of which must be a clique.
  const std::size_t t_count = layout.num_tests();
  const CorrelationMask& mask = layout.spec().mask;
  std::vector<std::size_t> comp(t_count);
  std::iota(comp.begin(), comp.end(), 0);
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& [i, j] : layout.free_pairs()) {
      const std::size_t m = std::min(comp[i], comp[j]);
      if (comp[i] != m || comp[j] != m) {
        comp[i] = comp[j] = m;
        changed = true;
      }
    }
  }
  for (std::size_t i = 0; i < t_count; ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (comp[i] == comp[j] && !mask(i, j))
        throw SpecError("prior sampling needs every connected block of the correlation mask to be complete");
  Matrix psi = Matrix::identity(t_count);
  for (std::size_t c = 0; c < t_count; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < t_count; ++i)
      if (comp[i] == c) members.push_back(i);
    if (members.size() < 2) continue;
    const Matrix block = sample_lkj_correlation(members.size(), layout.spec().priors.lkj_eta, rng);
    for (std::size_t a = 0; a < members.size(); ++a)
      for (std::size_t b = 0; b < members.size(); ++b) psi(members[a], members[b]) = block(a, b);
  }
  return cholesky(psi);
}

ParameterState<double> sample_prior(const ParameterLayout& layout, CounterRng& rng) {
  const ModelSpec& spec = layout.spec();
  const PriorSpec& pr = spec.priors;
  const std::size_t t_count = spec.num_tests();
  const std::size_t s_count = layout.num_studies();
  ParameterState<double> st;
  st.log_jacobian = 0.0;
  st.mu.resize(t_count);
  st.sigma.resize(t_count);
  st.rho.assign(t_count, 0.0);
  st.nu_raw.assign(s_count, std::vector<ClassPair<double>>(t_count, {0.0, 0.0}));
  st.nu.assign(s_count, std::vector<ClassPair<double>>(t_count));
  for (std::size_t t = 0; t < t_count; ++t) {
    if (layout.sampled_index[t] == ParameterLayout::npos) {
      st.mu[t] = {-kPerfectMean, kPerfectMean};
      st.sigma[t] = {0.0, 0.0};
      for (std::size_t s = 0; s < s_count; ++s) st.nu[s][t] = st.mu[t];
      continue;
    }
    do {
      for (std::size_t d = 0; d < kClasses; ++d)
        st.mu[t][d] = pr.mu[t][d].location + pr.mu[t][d].scale * rng.normal();
    } while (t == spec.reference_test && !(st.mu[t][1] > st.mu[t][0]));
    for (std::size_t d = 0; d < kClasses; ++d) st.sigma[t][d] = std::fabs(pr.sigma_scale[t][d] * rng.normal());
    st.rho[t] = std::tanh(pr.rho_scale * rng.normal());
    for (std::size_t s = 0; s < s_count; ++s) {
      const double z0 = rng.normal(), z1 = rng.normal();
      st.nu_raw[s][t] = {z0, z1};
      st.nu[s][t][0] = st.mu[t][0] + st.sigma[t][0] * z0;
      st.nu[s][t][1] = st.mu[t][1] + st.sigma[t][1] * (st.rho[t] * z0 + std::sqrt(1.0 - st.rho[t] * st.rho[t]) * z1);
    }
  }
  st.prevalence.resize(s_count);
  for (auto& p : st.prevalence) p = sample_beta(pr.prevalence_a, pr.prevalence_b, rng);

  st.beta = {0.0, 0.0};
  if (layout.dependent()) {
    st.chol_delta.resize(s_count);
    for (std::size_t d = 0; d < kClasses; ++d) {
      st.chol_g[d] = sample_mask_cholesky(layout, rng);
      st.beta[d] = rng.uniform();
      for (std::size_t s = 0; s < s_count; ++s) st.chol_delta[s][d] = sample_mask_cholesky(layout, rng);
    }
  }

  st.kappa.assign(t_count, {0.0, 0.0});
  st.phi.resize(t_count);
  st.cut.assign(s_count, std::vector<ClassPair<std::vector<double>>>(t_count));
  for (std::size_t t : layout.ordinal_tests) {
    const std::size_t k_count = static_cast<std::size_t>(spec.tests[t].num_categories);
    for (std::size_t d = 0; d < kClasses; ++d) {
      st.kappa[t][d] = std::fabs(pr.kappa_scale * rng.normal());
      std::vector<double> g(k_count);
      for (auto& v : g) v = rng.gamma(1.0);
      const double tot = std::accumulate(g.begin(), g.end(), 0.0);
      st.phi[t][d].resize(k_count);
      for (std::size_t k = 0; k < k_count; ++k) st.phi[t][d][k] = g[k] / tot;
      for (std::size_t s = 0; s < s_count; ++s) {
        std::vector<double> alpha(k_count);
        for (std::size_t k = 0; k < k_count; ++k) alpha[k] = st.kappa[t][d] * st.phi[t][d][k];
        st.cut[s][t][d] = probs_to_cutpoints(rng.dirichlet(alpha), 0.0);
      }
    }
  }
  return st;
}

}  // namespace mvplc
