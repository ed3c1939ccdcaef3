#include "doctest.h"
#include "mvplc/config.hpp"

using namespace mvplc;

namespace {

std::vector<TestDefinition> tests() {
  return {TestDefinition::dichotomous("US"), TestDefinition::dichotomous("DD"), TestDefinition::ordinal("Wells", 3)};
}

}  // namespace

TEST_CASE("the shipped model configs parse") {
  for (const char* m : {"m1", "m2", "m3", "m4", "priors_default", "simulate"}) {
    const auto c = RunConfig::load(std::string(MVPLC_SOURCE_DIR "/config/") + m + ".json");
    CHECK_NOTHROW(build_model_spec(c, tests()));
  }
  const auto m2 = RunConfig::load(MVPLC_SOURCE_DIR "/config/m2.json");
  const ModelSpec spec = build_model_spec(m2, tests());
  CHECK(spec.perfect[0]);
  CHECK(spec.mask(1, 2));
  CHECK_FALSE(spec.mask(0, 1));
  CHECK(m2.name == "M2");
}

TEST_CASE("unknown keys are rejected") {
  CHECK_THROWS_AS(RunConfig::parse(R"({"sampler": {"chain": 4}})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse(R"({"priors": {"sigma_uper": 1.0}})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse(R"({"priors": {"mu": {"US": {"se": [0.1, 0.9]}}}})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse(R"({"model": {"dependence": "some"}})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("{not json"), ConfigError);
}

TEST_CASE("prior overrides reach the model spec") {
  const auto c = RunConfig::parse(R"({
    "model": {"reference_test": "DD", "dependence": [["US", "Wells"]]},
    "priors": {"mu": {"US": {"diseased": {"location": 1.5, "scale": 0.2}}}, "kappa_scale": 10, "lkj_eta": 2.5,
               "prevalence": [2, 3]}})");
  const ModelSpec s = build_model_spec(c, tests());
  CHECK(s.reference_test == 1);
  CHECK(s.priors.mu[0][1].location == 1.5);
  CHECK(s.priors.kappa_scale == 10.0);
  CHECK(s.priors.lkj_eta == 2.5);
  CHECK(s.priors.prevalence_b == 3.0);
  CHECK(s.mask(2, 0));
  const auto bad = RunConfig::parse(R"({"priors": {"mu": {"CT": {"se_interval": [0.1, 0.9]}}}})");
  CHECK_THROWS_AS(build_model_spec(bad, tests()), ConfigError);
  const auto ordinal_ref = RunConfig::parse(R"({"model": {"reference_test": "Wells", "perfect_reference": true}})");
  CHECK_THROWS_AS(build_model_spec(ordinal_ref, tests()), ConfigError);
}

TEST_CASE("resolved config and hashing are stable") {
  const auto a = RunConfig::parse(R"({"sampler": {"seed": 5}})");
  const auto b = RunConfig::parse(R"({"sampler": {"seed": 5}})");
  CHECK(fnv1a_hex(a.resolved_json()) == fnv1a_hex(b.resolved_json()));
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}
