#include <cmath>
#include <fstream>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "doctest.h"
#include "helpers.hpp"
#include "mvplc/simulator.hpp"

using namespace mvplc;
using namespace mvplc::testing;
using doctest::Approx;

TEST_CASE("saturated means give an all-positive dataset") {
  const std::vector<TestDefinition> tests = {TestDefinition::dichotomous("A"), TestDefinition::dichotomous("B")};
  ModelSpec spec;
  spec.tests = tests;
  spec.perfect = {false, false};
  spec.mask = CorrelationMask::none(2);
  spec.priors = default_priors(tests, 0, spec.mask);
  const ParameterLayout layout(spec, 2);
  auto truth = constrain<double>(layout, std::vector<double>(layout.size(), 0.0));
  for (auto& s : truth.nu)
    for (auto& t : s) t = {5.0, 5.0};
  truth.prevalence = {1.0, 1.0};
  const MetaDataset d = simulate_dataset(layout, truth, std::vector<std::size_t>{50, 50}, 1);
  std::size_t positives = 0;
  for (const auto& s : d.studies())
    for (const auto& y : s.individuals) positives += y[0] + y[1];
  // Saturated link, not exactly one: allow a handful of negatives.
  CHECK(positives >= 195);
  CHECK(d.studies()[1].study_id == "S2");
}

TEST_CASE("exact pattern distribution for a dependent pair") {
  const std::vector<TestDefinition> tests = {TestDefinition::dichotomous("A"), TestDefinition::dichotomous("B")};
  ModelSpec spec;
  spec.tests = tests;
  spec.perfect = {false, false};
  spec.mask = CorrelationMask::all(2);
  spec.priors = default_priors(tests, 0, spec.mask);
  const ParameterLayout layout(spec, 1);
  auto truth = constrain<double>(layout, std::vector<double>(layout.size(), 0.0));
  truth.nu[0][0] = {0.0, 0.0};
  truth.nu[0][1] = {0.0, 0.0};
  truth.prevalence = {1.0};
  Matrix l = Matrix::identity(2);
  l(1, 0) = 0.5;
  l(1, 1) = std::sqrt(0.75);
  truth.chol_g = {l, l};
  truth.chol_delta[0] = {l, l};
  const auto probs = enumerate_pattern_probs(layout, truth, 0);
  const double s = std::sqrt(0.75);
  auto f = [&](double e1) { return approx_pdf(e1) * approx_cdf(-0.5 * e1 / s); };
  const double oracle = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, -kInf, 0.0, 15, 1e-12);
  double total = 0.0;
  for (const auto& p : probs) {
    total += p.probability;
    if (p.pattern == Pattern{0, 0}) CHECK(p.probability == Approx(oracle).epsilon(1e-8));
  }
  CHECK(total == Approx(1.0).epsilon(1e-10));
}

TEST_CASE("simulated frequencies match the exact distribution") {
  const ModelSpec spec = case_spec(Dep::all);
  const ParameterLayout layout(spec, 1);
  CounterRng rng(12, 0);
  const auto truth = sample_prior(layout, rng);
  const std::size_t n = 40000;
  const MetaDataset d = simulate_dataset(layout, truth, std::vector<std::size_t>{n}, 5);
  const auto probs = enumerate_pattern_probs(layout, truth, 0);
  for (const auto& p : probs) {
    double count = 0;
    for (const auto& y : d.studies()[0].individuals) count += (y == p.pattern);
    const double se = std::sqrt(p.probability * (1 - p.probability) / n);
    CHECK(std::fabs(count / n - p.probability) < 4 * se + 1e-4);
  }
}

TEST_CASE("truth files round trip") {
  const ModelSpec spec = case_spec(Dep::all);
  const ParameterLayout layout(spec, 10);
  std::ifstream in(MVPLC_SOURCE_DIR "/data/case_study_truth.json");
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  TrueParameters truth;
  CHECK_FALSE(truth_from_json(layout, ss.str(), truth));
  CounterRng rng(11, 0);
  draw_study_effects(layout, truth, rng);
  const std::string full = truth_to_json(layout, truth);
  TrueParameters back;
  CHECK(truth_from_json(layout, full, back));
  CHECK(back.nu[3][2][1] == Approx(truth.nu[3][2][1]).epsilon(1e-14));
  CHECK(back.prevalence == truth.prevalence);
  CHECK_THROWS(truth_from_json(layout, R"({"mu": [], "bogus": 1})", back));
  const auto same = simulate_dataset(layout, truth, std::vector<std::size_t>(10, 20), 4);
  const auto again = simulate_dataset(layout, back, std::vector<std::size_t>(10, 20), 4);
  CHECK(same.studies()[9].individuals == again.studies()[9].individuals);
}
