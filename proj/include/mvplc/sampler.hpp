#ifndef MVPLC_SAMPLER_HPP
#define MVPLC_SAMPLER_HPP

// Multinomial NUTS with a diagonal metric, adapted during warmup, plus the
// convergence diagnostics used to gate a fit.
//
// Warmup follows the usual three phases: a fast initial buffer (step size
// only), a run of doubling slow windows that re-estimate the metric, and a
// fast terminal buffer. Defaults are 75 / 25 (base window) / 50 iterations,
// rescaled to 15% / 75% / 10% when warmup is too short for them.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvplc {

struct SamplerError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SamplerConfig {
  std::size_t chains = 4;
  std::size_t warmup = 1000;
  std::size_t samples = 1000;
  double target_accept = 0.8;
  int max_treedepth = 10;
  std::uint64_t seed = 1;
  double init_radius = 2.0;  // uniform jitter half-width around the origin
  bool parallel = true;      // one thread per chain

  void validate() const;
};

/// A log density over R^n. `log_density_gradient` writes the gradient and
/// returns the value; failure is signalled by a non-finite value or by
/// throwing std::invalid_argument / std::domain_error (the sampler treats
/// either as a divergence). `generate` maps a point to the stored output
/// columns; when absent the point itself is stored.
struct Target {
  std::size_t dim = 0;
  std::function<double(std::span<const double>, std::span<double>)> log_density_gradient;
  std::function<std::vector<double>(std::span<const double>)> generate;
  std::vector<std::string> names;  // output column names; defaults to x[i]
};

struct Telemetry {
  double log_density = 0.0;
  double accept_stat = 0.0;
  double stepsize = 0.0;
  int treedepth = 0;
  int n_leapfrog = 0;
  bool divergent = false;
  double energy = 0.0;
};

struct ChainDraws {
  std::vector<std::vector<double>> values;  // [iteration][output column]
  std::vector<std::vector<double>> points;  // [iteration][unconstrained coordinate]
  std::vector<Telemetry> telemetry;         // aligned with values
  double stepsize = 0.0;
  std::vector<double> inv_metric;
};

struct PosteriorDraws {
  std::vector<std::string> names;
  std::vector<ChainDraws> chains;

  std::size_t num_chains() const { return chains.size(); }
  std::size_t num_draws() const;  // per chain (all chains equal)
  std::size_t num_params() const { return names.size(); }
  std::size_t total_draws() const { return num_chains() * num_draws(); }
  /// [chain][iteration] of one output column.
  std::vector<std::vector<double>> column(std::size_t param) const;
  /// One output column pooled over chains in chain-major order.
  std::vector<double> pooled(std::size_t param) const;
  std::size_t index_of(const std::string& name) const;  // throws SamplerError
  std::size_t divergences() const;
};

/// Runs NUTS. `init` overrides the jittered starting point for every chain.
PosteriorDraws run_chains(const Target& target, const SamplerConfig& config,
                          std::optional<std::vector<double>> init = std::nullopt);

/// Runs one chain; chain k of run_chains equals run_chain(target, config, k).
ChainDraws run_chain(const Target& target, const SamplerConfig& config, std::size_t chain,
                     std::optional<std::vector<double>> init = std::nullopt);

// ---- diagnostics ----------------------------------------------------------

/// Classic split R-hat (no rank normalization). chains[c][i].
double split_rhat_basic(const std::vector<std::vector<double>>& chains);
/// Rank-normalized split R-hat: max of the bulk and folded versions.
double split_rhat(const std::vector<std::vector<double>>& chains);
/// ESS with Geyer's initial monotone sequence (chains used as given).
double ess_basic(const std::vector<std::vector<double>>& chains);
/// ESS of the rank-normalized split chains.
double ess_bulk(const std::vector<std::vector<double>>& chains);
/// Minimum ESS of the 5% and 95% quantile indicators.
double ess_tail(const std::vector<std::vector<double>>& chains);
/// ESS of the raw split chains, the one behind the mean's MC standard error.
double ess_mean(const std::vector<std::vector<double>>& chains);
/// Monte Carlo standard error of the mean.
double mcse_mean(const std::vector<std::vector<double>>& chains);
/// Energy Bayesian fraction of missing information of one chain.
double efmi(std::span<const double> energy);

struct GateThresholds {
  double max_rhat = 1.05;
  double min_efmi = 0.2;
  std::size_t max_divergences = 0;
};

struct ParameterDiagnostics {
  std::string name;
  double mean = 0.0, sd = 0.0, mcse = 0.0;
  double rhat = 0.0, ess_bulk = 0.0, ess_tail = 0.0;
  bool constant = false;  // no variation; excluded from gating
};

struct DiagnosticsReport {
  std::vector<ParameterDiagnostics> parameters;
  std::vector<double> efmi;  // per chain
  std::size_t divergences = 0;
  std::size_t max_treedepth_hits = 0;
  double max_rhat = 0.0;
  std::string worst_rhat_parameter;
  double min_efmi = 0.0;
  bool rhat_ok = false, efmi_ok = false, divergences_ok = false;

  bool passed() const { return rhat_ok && efmi_ok && divergences_ok; }
};

/// Requires at least 2 chains and 4 draws per chain (SamplerError otherwise).
DiagnosticsReport diagnose(const PosteriorDraws& draws, const GateThresholds& gates = {}, int max_treedepth = 10);

void write_diagnostics_json(std::ostream& out, const DiagnosticsReport& report, const GateThresholds& gates);

// ---- draw files -------------------------------------------------------------

/// CSV with columns chain, iteration, lp__, accept_stat__, stepsize__,
/// treedepth__, n_leapfrog__, divergent__, energy__, then one per output.
void write_draws_csv(std::ostream& out, const PosteriorDraws& draws);
/// Same shape with the unconstrained coordinates as columns.
void write_points_csv(std::ostream& out, const PosteriorDraws& draws, std::span<const std::string> point_names);
/// Reads either file back (chains re-formed from the chain column). The
/// columns after the telemetry fill `values` when `as_points` is false and
/// `points` otherwise.
PosteriorDraws read_draws_csv(std::istream& in, bool as_points);

}  // namespace mvplc

#endif  // MVPLC_SAMPLER_HPP
