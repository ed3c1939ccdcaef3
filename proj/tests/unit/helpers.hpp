#ifndef MVPLC_TEST_HELPERS_HPP
#define MVPLC_TEST_HELPERS_HPP

#include <vector>

#include "mvplc/prior.hpp"
#include "mvplc/spec.hpp"

namespace mvplc::testing {

inline std::vector<TestDefinition> case_tests() {
  return {TestDefinition::dichotomous("US"), TestDefinition::dichotomous("DD"), TestDefinition::ordinal("Wells", 3)};
}

enum class Dep { none, one_pair, all };

/// Three-test spec in the shape of the case study.
inline ModelSpec case_spec(Dep dep, bool perfect_reference = false) {
  ModelSpec spec;
  spec.tests = case_tests();
  spec.perfect = {perfect_reference, false, false};
  switch (dep) {
    case Dep::none: spec.mask = CorrelationMask::none(3); break;
    case Dep::one_pair:
      spec.mask = CorrelationMask(3);
      spec.mask.set(1, 2);
      break;
    case Dep::all: spec.mask = CorrelationMask::all(3); break;
  }
  spec.priors = default_priors(spec.tests, 0, spec.mask);
  return spec;
}

}  // namespace mvplc::testing

#endif
