#ifndef MVPLC_SIMULATOR_HPP
#define MVPLC_SIMULATOR_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mvplc/data.hpp"
#include "mvplc/parameters.hpp"
#include "mvplc/rng.hpp"

namespace mvplc {

/// A complete model state used as the data-generating truth.
using TrueParameters = ParameterState<double>;

/// Draws the study-level quantities (nu, Psi_Delta, cutpoints) of `truth`
/// from the between-study model given its population-level values
/// (mu, sigma, rho, Psi_G, beta, kappa, phi, prevalence).
void draw_study_effects(const ParameterLayout& layout, TrueParameters& truth, CounterRng& rng);

/// Per individual: d ~ Bernoulli(p_s), e_t = link quantile of a uniform,
/// Z = nu + L e with L the study Cholesky factor, then thresholded. Each
/// individual uses its own counter stream, so results do not depend on
/// evaluation order.
MetaDataset simulate_dataset(const ParameterLayout& layout, const TrueParameters& truth,
                             std::span<const std::size_t> individuals_per_study, std::uint64_t seed);

struct PatternProbability {
  Pattern pattern;
  double probability;
};

/// Exact (or high-accuracy) distribution over all prod K_t patterns of study s:
/// interval products under independence, one-dimensional adaptive quadrature
/// for two tests, GHK with 65536 nodes otherwise. Requires T <= 4.
std::vector<PatternProbability> enumerate_pattern_probs(const ParameterLayout& layout, const TrueParameters& truth,
                                                        std::size_t s);

/// Every response pattern in lexicographic order.
std::vector<Pattern> all_patterns(std::span<const TestDefinition> tests);

std::string truth_to_json(const ParameterLayout& layout, const TrueParameters& truth);
/// Reads population-level values and, when present, study-level values.
/// Returns whether study-level values were supplied.
bool truth_from_json(const ParameterLayout& layout, const std::string& json_text, TrueParameters& truth);

}  // namespace mvplc

#endif  // MVPLC_SIMULATOR_HPP
