#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "mvplc/parameters.hpp"
#include "mvplc/prior.hpp"

using namespace mvplc;
using namespace mvplc::testing;
using doctest::Approx;

namespace {
// Pinned at first computation; guards against silent prior changes.
constexpr double kGoldenLogPrior = -51.8638049505938;
}  // namespace

TEST_CASE("interval calibration of the latent-mean priors") {
  const NormalPrior vague = interval_to_probit_normal(0.04, 0.96);
  CHECK(vague.location == Approx(0.0).epsilon(1e-12));
  CHECK(vague.scale == Approx(0.95).epsilon(0.01));
  const NormalPrior se = interval_to_probit_normal(0.49, 0.94);
  CHECK(se.location == Approx(0.796).epsilon(0.002));
  CHECK(se.scale == Approx(0.418).epsilon(0.002));
  CHECK(interval_to_probit_normal(0.2, 0.8).location == 0.0);
  CHECK(half_normal_scale_for_upper(1.09) == Approx(1.09 / 2.2414).epsilon(1e-4));
  CHECK(std::tanh(1.959963984540054 * tanh_normal_scale_for_interval(0.82)) == Approx(0.82).epsilon(1e-10));
}

TEST_CASE("default priors by test role") {
  const ModelSpec spec = case_spec(Dep::all);
  const PriorSpec& p = spec.priors;
  // Reference specificity interval maps to a negative location for the non-diseased mean.
  CHECK(p.mu[0][0].location < 0.0);
  CHECK(p.mu[0][1].location > 0.0);
  CHECK(p.mu[1][0].location == Approx(0.0).epsilon(1e-12));
  CHECK(p.mu[2][1].location == 0.0);
  CHECK(p.mu[2][1].scale == 1.0);
  CHECK(p.kappa_scale == 50.0);
  CHECK(p.lkj_eta > 1.0);
}

TEST_CASE("zero vector maps to the centre of every transform") {
  const ModelSpec spec = case_spec(Dep::all);
  const ParameterLayout layout(spec, 3);
  const std::vector<double> x(layout.size(), 0.0);
  const auto st = constrain<double>(layout, x);
  for (double r : st.rho) CHECK(r == 0.0);
  for (double p : st.prevalence) CHECK(p == 0.5);
  for (const auto& s : st.sigma) {
    CHECK(s[0] == 1.0);
    CHECK(s[1] == 1.0);
  }
  const Matrix psi = correlation_from_cholesky(st.chol_g[1]);
  CHECK(psi(1, 0) == 0.0);
  CHECK(psi(2, 1) == 0.0);
}

TEST_CASE("constrain and unconstrain are inverse") {
  const ModelSpec spec = case_spec(Dep::all);
  const ParameterLayout layout(spec, 2);
  CounterRng rng(3, 0);
  std::vector<double> x(layout.size());
  for (auto& v : x) v = 2 * rng.uniform() - 1;
  const auto st = constrain<double>(layout, x);
  const auto back = unconstrain(layout, st);
  REQUIRE(back.size() == x.size());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(back[i] == Approx(x[i]).epsilon(1e-8));
  // The reference test's class means stay ordered.
  CHECK(st.mu[0][1] > st.mu[0][0]);
  // Study cutpoints are increasing.
  for (const auto& s : st.cut) CHECK(s[2][0][1] > s[2][0][0]);
  CHECK(constrained_names(layout).size() == constrained_values(layout, st).size());
}

TEST_CASE("log-Jacobian matches numerical differentiation in one block") {
  // Prevalence block: p = inv_logit(x), log|dp/dx| = log p(1-p).
  const ModelSpec spec = case_spec(Dep::none);
  const ParameterLayout layout(spec, 1);
  std::vector<double> x(layout.size(), 0.0);
  const double base = constrain<double>(layout, x).log_jacobian;
  x[layout.prev] = 1.3;
  const double moved = constrain<double>(layout, x).log_jacobian;
  const double p = inv_logit(1.3);
  CHECK(moved - base == Approx(std::log(p * (1 - p)) - std::log(0.25)).epsilon(1e-10));
}

TEST_CASE("log prior golden value at a fixed state") {
  const ModelSpec spec = case_spec(Dep::all);
  const ParameterLayout layout(spec, 2);
  const std::vector<double> x(layout.size(), 0.0);
  const auto st = constrain<double>(layout, x);
  const double lp = log_prior(layout, st);
  CHECK(std::isfinite(lp));
  CHECK(lp == Approx(kGoldenLogPrior).epsilon(1e-10));
}

TEST_CASE("prior predictive intervals reproduce the calibration targets") {
  const ModelSpec spec = case_spec(Dep::all);
  const ParameterLayout layout(spec, 1);
  CounterRng rng(77, 0);
  const int n = 20000;
  std::vector<double> se_ref, sp_ref, se_dd, sigma, rho, psi;
  for (int i = 0; i < n; ++i) {
    const auto st = sample_prior(layout, rng);
    se_ref.push_back(approx_cdf(st.mu[0][1]));
    sp_ref.push_back(1 - approx_cdf(st.mu[0][0]));
    se_dd.push_back(approx_cdf(st.mu[1][1]));
    sigma.push_back(st.sigma[1][0]);
    rho.push_back(st.rho[1]);
    psi.push_back(correlation_from_cholesky(st.chol_g[0])(1, 0));
  }
  auto q = [](std::vector<double> v, double p) { return quantile(v, p); };
  CHECK(std::fabs(q(se_ref, 0.025) - 0.49) < 0.02);
  CHECK(std::fabs(q(se_ref, 0.975) - 0.94) < 0.02);
  CHECK(std::fabs(q(sp_ref, 0.025) - 0.82) < 0.02);
  CHECK(std::fabs(q(sp_ref, 0.975) - 0.99) < 0.02);
  CHECK(std::fabs(q(se_dd, 0.025) - 0.04) < 0.02);
  CHECK(std::fabs(q(sigma, 0.975) - 1.09) < 0.03);
  CHECK(std::fabs(q(rho, 0.975) - 0.82) < 0.02);
  CHECK(std::fabs(q(psi, 0.975) - 0.65) < 0.03);
}
