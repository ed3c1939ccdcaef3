#ifndef MVPLC_EVALUATION_HPP
#define MVPLC_EVALUATION_HPP

// Leave-one-out model comparison by Pareto-smoothed importance sampling, and
// posterior predictive checks on within-study correlations and pattern counts.
//
// The pointwise unit is the individual. The generalized Pareto tail uses the
// largest ceil(min(0.2 S, 3 sqrt(S))) importance ratios of S draws, fitted by
// the Zhang-Stephens profile estimator with a weakly informative shrinkage
// of k toward 0.5 (weight 10 pseudo-observations).

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mvplc/data.hpp"
#include "mvplc/model.hpp"
#include "mvplc/parameters.hpp"

namespace mvplc {

struct EvaluationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Draws x individuals, row-major.
struct PointwiseLogLik {
  std::size_t draws = 0, points = 0;
  std::vector<double> values;

  double operator()(std::size_t i, std::size_t j) const { return values[i * points + j]; }
  std::vector<double> column(std::size_t j) const;
};

PointwiseLogLik pointwise_loglik(const Model& model, std::span<const ParameterState<double>> states);

struct ParetoFit {
  double k = 0.0, sigma = 0.0;
};

/// Zhang-Stephens estimate for exceedances x (any order, all >= 0).
ParetoFit fit_generalized_pareto(std::span<const double> x, bool shrink = true);

struct PsisResult {
  std::vector<double> log_weights;  // smoothed, unnormalized
  double pareto_k = 0.0;
};

/// Smooths one vector of log importance ratios.
PsisResult psis_smooth(std::span<const double> log_ratios);

struct LooResult {
  double elpd = 0.0, se = 0.0;
  double looic = 0.0, looic_se = 0.0;  // -2 elpd and its SE
  double p_loo = 0.0;
  double mcse = 0.0;
  std::vector<double> pointwise;  // elpd_i
  std::vector<double> pareto_k;
  std::size_t high_k = 0;  // k > 0.7

  std::size_t size() const { return pointwise.size(); }
};

/// Needs at least 100 draws. Constant columns are exact (k reported as 0).
LooResult psis_loo(const PointwiseLogLik& pll);

struct LooComparison {
  double elpd_diff = 0.0, se_diff = 0.0;
};

/// a minus b with the paired standard error; both must cover the same points.
LooComparison compare(const LooResult& a, const LooResult& b);

struct NamedLoo {
  std::string model;
  LooResult loo;
};

/// Table with the best model first: model, LOO-IC, SE, elpd diff vs best, SE of diff.
void write_loo_table(std::ostream& out, std::vector<NamedLoo> models);

// ---- posterior predictive checks ------------------------------------------------

/// Evenly spaced indices of `count` draws out of `total` (all when count >= total).
std::vector<std::size_t> subsample_indices(std::size_t total, std::size_t count);

/// Pearson correlation of two integer columns; NaN when either is constant.
double pearson(std::span<const int> a, std::span<const int> b);

struct CorrelationResidual {
  std::size_t study = 0, test_a = 0, test_b = 0;
  double observed = 0.0;
  double median = 0.0, lower = 0.0, upper = 0.0;  // of observed - replicated
  std::size_t replicates = 0;                      // with a defined correlation
  bool covers_zero = false;
};

/// For each of R states (evenly subsampled), simulates a dataset of the observed
/// shape and compares per-study pairwise correlations. Replicate r uses seed
/// stream r, so results depend only on (states, seed, R).
std::vector<CorrelationResidual> ppc_correlation_residuals(const ParameterLayout& layout, const MetaDataset& data,
                                                           std::span<const ParameterState<double>> states,
                                                           std::size_t replicates, std::uint64_t seed);

struct CountResidual {
  std::size_t study = 0;
  Pattern pattern;
  double observed = 0.0;
  double median = 0.0, lower = 0.0, upper = 0.0;  // replicated counts
  bool covered = false;
};

std::vector<CountResidual> ppc_count_residuals(const ParameterLayout& layout, const MetaDataset& data,
                                               std::span<const ParameterState<double>> states, std::size_t replicates,
                                               std::uint64_t seed);

/// Fraction of intervals covering their target, ignoring undefined ones.
double coverage(std::span<const CorrelationResidual> rows);
double coverage(std::span<const CountResidual> rows);

void write_correlation_residuals_csv(std::ostream& out, const MetaDataset& data,
                                     std::span<const CorrelationResidual> rows);
void write_count_residuals_csv(std::ostream& out, const MetaDataset& data, std::span<const CountResidual> rows);

}  // namespace mvplc

#endif  // MVPLC_EVALUATION_HPP
