#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "mvplc/evaluation.hpp"
#include "mvplc/simulator.hpp"

using namespace mvplc;
using namespace mvplc::testing;
using doctest::Approx;

namespace {

double normal_logpdf(double x, double m, double v) {
  return -0.5 * std::log(2 * std::numbers::pi * v) - 0.5 * (x - m) * (x - m) / v;
}

}  // namespace

TEST_CASE("generalized Pareto fit recovers the shape") {
  CounterRng rng(3, 0);
  const double k = 0.3, sigma = 1.0;
  std::vector<double> x(20000);
  for (auto& v : x) v = sigma * std::expm1(-k * std::log1p(-rng.uniform())) / k;
  const ParetoFit fit = fit_generalized_pareto(x, false);
  CHECK(fit.k == Approx(k).epsilon(0.1));
  CHECK(fit.sigma == Approx(sigma).epsilon(0.05));
}

TEST_CASE("PSIS-LOO on a conjugate normal model") {
  // y_j ~ N(theta, 1), theta ~ N(0, 100): exact posteriors available in closed form.
  const std::vector<double> y = {-0.8, 0.3, 1.1, 0.4, 2.5};
  const double prior_v = 100.0;
  auto posterior = [&](int skip, double& m, double& v) {
    double prec = 1.0 / prior_v, sum = 0.0;
    for (int j = 0; j < 5; ++j)
      if (j != skip) {
        prec += 1.0;
        sum += y[j];
      }
    v = 1.0 / prec;
    m = v * sum;
  };
  double m = 0.0, v = 0.0;
  posterior(-1, m, v);
  CounterRng rng(4, 0);
  PointwiseLogLik pll;
  pll.draws = 40000;
  pll.points = 5;
  for (std::size_t i = 0; i < pll.draws; ++i) {
    const double theta = m + std::sqrt(v) * rng.normal();
    for (double yj : y) pll.values.push_back(normal_logpdf(yj, theta, 1.0));
  }
  double exact = 0.0;
  for (int j = 0; j < 5; ++j) {
    double mj = 0.0, vj = 0.0;
    posterior(j, mj, vj);
    exact += normal_logpdf(y[j], mj, 1.0 + vj);
  }
  const LooResult loo = psis_loo(pll);
  CHECK(std::fabs(loo.elpd - exact) < 0.05);
  CHECK(loo.looic == Approx(-2 * loo.elpd));
  CHECK(loo.p_loo > 0.0);
  CHECK(loo.high_k == 0);
  const auto same = compare(loo, loo);
  CHECK(same.elpd_diff == 0.0);
  CHECK(same.se_diff == 0.0);
}

TEST_CASE("constant pointwise columns are exact") {
  PointwiseLogLik pll;
  pll.draws = 200;
  pll.points = 2;
  CounterRng rng(1, 0);
  for (std::size_t i = 0; i < pll.draws; ++i) {
    pll.values.push_back(-1.25);
    pll.values.push_back(-1.0 + 0.1 * rng.normal());
  }
  const LooResult loo = psis_loo(pll);
  CHECK(loo.pointwise[0] == -1.25);
  CHECK(loo.pareto_k[0] == 0.0);
  pll.draws = 50;
  pll.values.resize(100);
  CHECK_THROWS_AS(psis_loo(pll), EvaluationError);
}

TEST_CASE("LOO table ranks the best model first") {
  LooResult a, b;
  a.pointwise = {-1.0, -2.0, -1.5};
  b.pointwise = {-1.2, -2.5, -1.6};
  a.elpd = -4.5;
  b.elpd = -5.3;
  const auto c = compare(b, a);
  CHECK(c.elpd_diff == Approx(-0.8));
  std::ostringstream out;
  write_loo_table(out, {{"worse", b}, {"better", a}});
  CHECK(out.str().find("better") < out.str().find("worse"));
}

TEST_CASE("pointwise log-likelihoods") {
  const ModelSpec spec = case_spec(Dep::none);
  const ParameterLayout layout(spec, 1);
  CounterRng rng(2, 0);
  const auto truth = sample_prior(layout, rng);
  const MetaDataset sim = simulate_dataset(layout, truth, std::vector<std::size_t>{6}, 3);
  // Duplicate the first individual.
  auto study = sim.studies()[0];
  study.individuals.push_back(study.individuals[0]);
  const MetaDataset data(case_tests(), {study});
  const Model model(spec, data);
  std::vector<ParameterState<double>> states = {sample_prior(layout, rng), sample_prior(layout, rng)};
  const auto pll = pointwise_loglik(model, states);
  CHECK(pll.points == 7);
  CHECK(pll(1, 0) == pll(1, 6));
  CHECK(pll(0, 3) == Approx(model.individual_loglik(data.studies()[0].individuals[3], states[0], 0)));
}

TEST_CASE("helpers") {
  CHECK(subsample_indices(10, 20).size() == 10);
  const auto idx = subsample_indices(1000, 4);
  CHECK(idx == std::vector<std::size_t>{125, 375, 625, 875});
  const std::vector<int> a = {0, 1, 1, 0}, b = {0, 1, 1, 0}, c = {1, 1, 1, 1};
  CHECK(pearson(a, b) == Approx(1.0));
  CHECK(std::isnan(pearson(a, c)));
}

TEST_CASE("posterior predictive checks are calibrated at the truth") {
  const ModelSpec spec = case_spec(Dep::all);
  const ParameterLayout layout(spec, 12);
  CounterRng rng(6, 0);
  const auto truth = sample_prior(layout, rng);
  const MetaDataset data = simulate_dataset(layout, truth, std::vector<std::size_t>(12, 150), 99);
  const std::vector<ParameterState<double>> states(50, truth);
  const auto corr = ppc_correlation_residuals(layout, data, states, 200, 5);
  CHECK(corr.size() == 36);
  const double cov = coverage(std::span<const CorrelationResidual>(corr));
  CHECK(cov >= 0.8);
  const auto counts = ppc_count_residuals(layout, data, states, 200, 5);
  CHECK(counts.size() == 12 * 12);
  CHECK(coverage(std::span<const CountResidual>(counts)) >= 0.85);
  // Deterministic given the seed.
  CHECK(ppc_correlation_residuals(layout, data, states, 200, 5)[7].median == corr[7].median);
}
