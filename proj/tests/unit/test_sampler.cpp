#include <cmath>
#include <sstream>

#include "doctest.h"
#include "mvplc/rng.hpp"
#include "mvplc/sampler.hpp"

using namespace mvplc;

namespace {

Target std_normal(std::size_t dim) {
  Target t;
  t.dim = dim;
  t.log_density_gradient = [](std::span<const double> x, std::span<double> g) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      s -= 0.5 * x[i] * x[i];
      g[i] = -x[i];
    }
    return s;
  };
  return t;
}

Target funnel() {
  Target t;
  t.dim = 10;
  t.log_density_gradient = [](std::span<const double> x, std::span<double> g) {
    const double v = x[0];
    double s = -v * v / 18.0;
    g[0] = -v / 9.0;
    for (std::size_t i = 1; i < x.size(); ++i) {
      s += -0.5 * x[i] * x[i] * std::exp(-v) - 0.5 * v;
      g[0] += 0.5 * x[i] * x[i] * std::exp(-v) - 0.5;
      g[i] = -x[i] * std::exp(-v);
    }
    return s;
  };
  return t;
}

ChainDraws chain_of(const std::vector<double>& v) {
  ChainDraws c;
  for (double x : v) c.values.push_back({x});
  c.telemetry.resize(v.size());
  return c;
}

}  // namespace

TEST_CASE("NUTS on a standard normal") {
  SamplerConfig c;
  c.seed = 7;
  const auto draws = run_chains(std_normal(10), c);
  CHECK(draws.num_chains() == 4);
  CHECK(draws.num_draws() == 1000);
  CHECK(draws.divergences() == 0);
  const auto report = diagnose(draws);
  for (const auto& p : report.parameters) {
    CHECK(p.rhat < 1.01);
    CHECK(std::fabs(p.mean) < 4 * p.mcse);
    CHECK(p.sd == doctest::Approx(1.0).epsilon(0.1));
  }
  CHECK(report.passed());
}

TEST_CASE("same seed gives identical draws, different seeds differ") {
  SamplerConfig c;
  c.chains = 2;
  c.warmup = 200;
  c.samples = 100;
  c.seed = 3;
  const auto a = run_chains(std_normal(3), c), b = run_chains(std_normal(3), c);
  CHECK(a.chains[1].values == b.chains[1].values);
  // A chain does not depend on how many chains run alongside it.
  const auto one = run_chain(std_normal(3), c, 1);
  CHECK(one.values == a.chains[1].values);
  c.seed = 4;
  CHECK(run_chains(std_normal(3), c).chains[0].values != a.chains[0].values);
}

TEST_CASE("divergences are detected on a funnel") {
  SamplerConfig c;
  c.seed = 11;
  c.warmup = 500;
  c.samples = 500;
  CHECK(run_chains(funnel(), c).divergences() > 0);
}

TEST_CASE("non-finite targets become divergences instead of crashes") {
  Target t = std_normal(2);
  t.log_density_gradient = [](std::span<const double> x, std::span<double> g) {
    if (x[0] > 1.5) throw std::domain_error("outside support");
    g[0] = -x[0];
    g[1] = -x[1];
    return -0.5 * (x[0] * x[0] + x[1] * x[1]);
  };
  SamplerConfig c;
  c.chains = 1;
  c.warmup = 200;
  c.samples = 200;
  const auto d = run_chains(t, c);
  for (const auto& row : d.chains[0].values) CHECK(row[0] <= 1.5);
}

TEST_CASE("R-hat and ESS on constructed chains") {
  CounterRng rng(1, 0);
  std::vector<double> a(1000), b(1000), shifted(1000);
  for (auto& v : a) v = rng.normal();
  for (auto& v : shifted) v = 5.0 + rng.normal();
  b = a;
  const double r = split_rhat({a, b});
  CHECK(r >= 0.995);
  CHECK(r <= 1.01);
  PosteriorDraws apart;
  apart.names = {"x"};
  apart.chains = {chain_of(a), chain_of(shifted)};
  CHECK(split_rhat({a, shifted}) > 1.05);
  CHECK_FALSE(diagnose(apart).rhat_ok);
  std::vector<double> c(1000), d(1000);
  for (auto& v : c) v = rng.normal();
  for (auto& v : d) v = rng.normal();
  CHECK(std::fabs(ess_bulk({c, d}) / 2000.0 - 1.0) < 0.15);
  CHECK(std::fabs(ess_basic({c, d}) / 2000.0 - 1.0) < 0.15);
}

TEST_CASE("E-FMI") {
  std::vector<double> white(2000);
  CounterRng rng(2, 0);
  for (auto& v : white) v = rng.normal();
  CHECK(efmi(white) == doctest::Approx(2.0).epsilon(0.1));
  std::vector<double> sticky(2000);
  double e = 0.0;
  for (auto& v : sticky) v = e = 0.99 * e + 0.1 * rng.normal();
  CHECK(efmi(sticky) < 0.2);
}

TEST_CASE("draw files round trip") {
  SamplerConfig c;
  c.chains = 2;
  c.warmup = 50;
  c.samples = 20;
  Target t = std_normal(2);
  t.generate = [](std::span<const double> x) { return std::vector<double>{x[0], x[1], x[0] + x[1]}; };
  t.names = {"a[1,2]", "b", "a \"plus\" b"};
  const auto draws = run_chains(t, c);
  std::stringstream s;
  write_draws_csv(s, draws);
  const auto back = read_draws_csv(s, false);
  CHECK(back.names == draws.names);
  CHECK(back.chains[1].values == draws.chains[1].values);
  CHECK(back.chains[1].telemetry[3].n_leapfrog == draws.chains[1].telemetry[3].n_leapfrog);
  std::stringstream p;
  const std::vector<std::string> pn = {"x0", "x1"};
  write_points_csv(p, draws, pn);
  const auto pts = read_draws_csv(p, true);
  CHECK(pts.chains[0].points == draws.chains[0].points);
}

TEST_CASE("invalid sampler configuration") {
  SamplerConfig c;
  c.target_accept = 1.5;
  CHECK_THROWS(c.validate());
  c = SamplerConfig{};
  c.chains = 0;
  CHECK_THROWS(c.validate());
}
