#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "mvplc/model.hpp"
#include "mvplc/simulator.hpp"

using namespace mvplc;
using namespace mvplc::testing;
using doctest::Approx;

namespace {

MetaDataset small_data(const ModelSpec& spec, std::size_t studies, std::uint64_t seed) {
  const ParameterLayout layout(spec, studies);
  CounterRng rng(seed, 0);
  const auto truth = sample_prior(layout, rng);
  return simulate_dataset(layout, truth, std::vector<std::size_t>(studies, 15), seed + 1);
}

std::vector<double> random_point(std::size_t dim, CounterRng& rng, double r = 1.0) {
  std::vector<double> x(dim);
  for (auto& v : x) v = r * (2 * rng.uniform() - 1);
  return x;
}

double normalization(const Model& m, const ParameterState<double>& st, std::size_t s) {
  double total = 0.0;
  for (const auto& y : all_patterns(m.data().tests())) total += std::exp(m.individual_loglik(y, st, s));
  return total;
}

void check_gradient(const Model& m, std::uint64_t seed) {
  CounterRng rng(seed, 1);
  for (int rep = 0; rep < 3; ++rep) {
    const auto x = random_point(m.dim(), rng);
    std::vector<double> g(x.size());
    const double v = m.log_density_gradient(x, g);
    CHECK(v == Approx(m.log_density(x)).epsilon(1e-12));
    for (std::size_t i = 0; i < x.size(); ++i) {
      auto xp = x, xm = x;
      xp[i] += 1e-5;
      xm[i] -= 1e-5;
      const double fd = (m.log_density(xp) - m.log_density(xm)) / 2e-5;
      CHECK(std::fabs(g[i] - fd) / std::max(1.0, std::fabs(fd)) < 1e-4);
    }
  }
}

}  // namespace

TEST_CASE("box bounds") {
  const ModelSpec spec = case_spec(Dep::none);
  const ParameterLayout layout(spec, 1);
  std::vector<double> x(layout.size(), 0.0);
  auto st = constrain<double>(layout, x);
  st.nu[0][0][1] = 0.0;
  st.nu[0][2][1] = 0.0;
  st.cut[0][2][1] = {-1.0, 1.0};
  const auto tests = case_tests();
  auto b = box_bounds({1, 0, 1}, tests, st, 0, 1);
  CHECK(b.lower[0] == 0.0);
  CHECK(b.upper[0] == kInf);
  CHECK(b.lower[2] == -1.0);
  CHECK(b.upper[2] == 1.0);
  b = box_bounds({1, 0, 0}, tests, st, 0, 1);
  CHECK(b.lower[2] == -kInf);
  CHECK(b.upper[2] == -1.0);
}

TEST_CASE("likelihood normalizes over all patterns") {
  for (Dep dep : {Dep::none, Dep::one_pair, Dep::all}) {
    const ModelSpec spec = case_spec(dep);
    const Model m(spec, small_data(spec, 3, 5));
    CounterRng rng(8, 0);
    for (int rep = 0; rep < 5; ++rep) {
      const auto st = sample_prior(m.layout(), rng);
      for (std::size_t s = 0; s < 3; ++s) {
        const double total = normalization(m, st, s);
        if (dep == Dep::none) CHECK(std::fabs(total - 1.0) < 1e-12);
        else CHECK(std::fabs(total - 1.0) < 2e-3);
      }
    }
  }
}

TEST_CASE("degenerate mixtures") {
  const ModelSpec spec = case_spec(Dep::all);
  const Model m(spec, small_data(spec, 2, 3));
  CounterRng rng(4, 0);
  auto st = sample_prior(m.layout(), rng);
  st.prevalence[1] = 1.0;
  const Pattern y = {1, 0, 2};
  CHECK(m.individual_loglik(y, st, 1) == Approx(std::log(m.class_probability(y, st, 1, 1))).epsilon(1e-12));

  std::vector<TestDefinition> one = {TestDefinition::dichotomous("A")};
  ModelSpec s1;
  s1.tests = one;
  s1.perfect = {false};
  s1.mask = CorrelationMask::none(1);
  s1.priors = default_priors(one, 0, s1.mask);
  const MetaDataset d1(one, {StudyData{"x", {{0}, {1}}}});
  const Model m1(s1, d1);
  auto st1 = m1.state(std::vector<double>(m1.dim(), 0.0));
  st1.nu[0][0] = {0.0, 0.0};
  for (double p : {0.1, 0.9}) {
    st1.prevalence[0] = p;
    CHECK(m1.individual_loglik({0}, st1, 0) == Approx(std::log(0.5)));
    CHECK(m1.individual_loglik({1}, st1, 0) == Approx(std::log(0.5)));
  }
}

TEST_CASE("pointwise log-likelihood sums to the data term") {
  const ModelSpec spec = case_spec(Dep::one_pair);
  const Model m(spec, small_data(spec, 3, 21));
  CounterRng rng(2, 0);
  const auto st = sample_prior(m.layout(), rng);
  const auto pw = m.pointwise_loglik(st);
  CHECK(pw.size() == m.data().num_individuals());
  double sum = 0.0;
  for (double v : pw) sum += v;
  CHECK(m.data_loglik(st) == Approx(sum).epsilon(1e-12));
  const auto& first = m.data().studies()[0].individuals[0];
  CHECK(pw[0] == Approx(m.individual_loglik(first, st, 0)).epsilon(1e-12));
}

TEST_CASE("log posterior gradient matches finite differences") {
  SUBCASE("imperfect reference, conditional independence") {
    const ModelSpec spec = case_spec(Dep::none);
    check_gradient(Model(spec, small_data(spec, 3, 31)), 1);
  }
  SUBCASE("imperfect reference, dependence on all pairs") {
    const ModelSpec spec = case_spec(Dep::all);
    check_gradient(Model(spec, small_data(spec, 3, 41)), 2);
  }
  SUBCASE("perfect reference, one dependent pair") {
    const ModelSpec spec = case_spec(Dep::one_pair, true);
    check_gradient(Model(spec, small_data(spec, 2, 51)), 3);
  }
}

TEST_CASE("non-finite input is reported") {
  const ModelSpec spec = case_spec(Dep::none);
  const Model m(spec, small_data(spec, 2, 3));
  std::vector<double> x(m.dim(), 0.0), g(m.dim());
  x[0] = std::nan("");
  CHECK_THROWS(m.log_density_gradient(x, g));
}
