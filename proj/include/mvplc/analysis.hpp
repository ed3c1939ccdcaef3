#ifndef MVPLC_ANALYSIS_HPP
#define MVPLC_ANALYSIS_HPP

// Accuracy estimands derived from posterior draws.
//
// For test t and threshold k (ordinal: "positive" means category >= k, with
// 1 <= k <= K-1), with latent class means nu and cutpoints C:
//   dichotomous  Se = F(nu1),        Sp = 1 - F(nu0)
//   ordinal      Se_k = F(nu1 - C1_k), Sp_k = F(C0_k - nu0)
// where F is the logistic approximation to the normal CDF.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvplc/parameters.hpp"
#include "mvplc/rng.hpp"
#include "mvplc/sampler.hpp"

namespace mvplc {

struct Accuracy {
  double se = 0.0, sp = 0.0;
};

/// Study-specific accuracy. `k` (1-based threshold) is required for ordinal
/// tests and must be absent for dichotomous ones.
Accuracy study_accuracy(const ParameterLayout& layout, const ParameterState<double>& state, std::size_t s,
                        std::size_t t, std::optional<int> k = std::nullopt);

/// Accuracy at the means of the between-study model, using summary cutpoints.
Accuracy summary_accuracy(const ParameterLayout& layout, const ParameterState<double>& state, std::size_t t,
                          std::optional<int> k = std::nullopt);

/// Latent means and cutpoints of one simulated new study.
struct PredictedStudy {
  std::vector<ClassPair<double>> nu;                 // [t][d]
  std::vector<ClassPair<std::vector<double>>> cut;  // [t][d], ordinal only
};

/// Draws the means from the bivariate between-study normal and, for ordinal
/// tests, one probability vector per class from Dirichlet(kappa phi).
PredictedStudy predict_new_study(const ParameterLayout& layout, const ParameterState<double>& state, CounterRng& rng);
Accuracy predicted_accuracy(const ParameterLayout& layout, const PredictedStudy& study, std::size_t t,
                            std::optional<int> k = std::nullopt);

enum class Strategy { btn, btp };
Strategy parse_strategy(const std::string& s);
std::string to_string(Strategy s);

struct JointAccuracy {
  double se = 0.0, sp = 0.0;
  double cov_diseased = 0.0, cov_healthy = 0.0;
  bool clamped = false;  // a value fell outside [0, 1] before clamping
};

/// Summary accuracy of two tests combined. Covariances use the product-moment
/// correlation implied by the global latent correlation at thresholds matched
/// to the marginal positive rates.
JointAccuracy joint_accuracy(const ParameterLayout& layout, const ParameterState<double>& state, std::size_t t,
                             std::size_t t2, std::optional<int> k, std::optional<int> k2, Strategy strategy);

// ---- estimand tables ----------------------------------------------------------

enum class Scope { summary, prediction, study };

struct JointRequest {
  std::size_t t = 0, t2 = 1;
  std::optional<int> k, k2;
  Strategy strategy = Strategy::btn;
};

/// Parses "t,t',k,k',BTN|BTP" (tests by label or 1-based index; a threshold
/// of 0 or empty for a dichotomous test).
JointRequest parse_joint(std::span<const TestDefinition> tests, const std::string& text);

struct EstimandRequest {
  std::vector<std::size_t> tests;  // empty = all
  bool prediction = true;
  bool studies = false;
  std::vector<JointRequest> joint;
  std::uint64_t seed = 1;  // predictive draws
};

struct Estimand {
  std::string measure;  // Se or Sp
  Scope scope = Scope::summary;
  std::size_t study = 0;
  std::string test;     // label; "A&B" for joint estimands
  std::string cutpoint; // "" or k, "k;k'" for joint
  std::string strategy; // "", BTN, BTP

  std::string name() const;
};

struct EstimandTable {
  std::vector<Estimand> estimands;
  std::vector<std::vector<double>> values;  // [estimand][draw]
  std::size_t joint_evaluations = 0;
  std::size_t joint_clamped = 0;
};

/// Every requested estimand at every state. Predictive draws use stream i of
/// the request seed for state i.
EstimandTable compute_estimands(const ParameterLayout& layout, std::span<const ParameterState<double>> states,
                                const EstimandRequest& request);

/// Constrained states of every stored draw (chain-major order).
std::vector<ParameterState<double>> draw_states(const ParameterLayout& layout, const PosteriorDraws& draws);

struct AccuracySummary {
  Estimand estimand;
  double median = 0.0, lower = 0.0, upper = 0.0;
};

/// Median and central 95% interval, quantiles by linear interpolation.
AccuracySummary summarize_values(const Estimand& e, std::span<const double> values);
std::vector<AccuracySummary> summarize(const EstimandTable& table);
void write_summary_csv(std::ostream& out, std::span<const AccuracySummary> rows);

// ---- sROC ---------------------------------------------------------------------

/// Bivariate normal fitted on the logit scale of (Se, 1 - Sp); the region is
/// the ellipse of squared Mahalanobis radius chi2_2(0.95) = -2 log 0.05.
struct Ellipse {
  double center_x = 0.0, center_y = 0.0;  // logit(1 - Sp), logit(Se)
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  double radius2 = 0.0;

  bool contains(double fpr, double se) const;
  /// Closed polygon on the probability scale.
  std::vector<std::pair<double, double>> outline(std::size_t points = 100) const;
};

Ellipse fit_ellipse(std::span<const double> fpr, std::span<const double> se, double level = 0.95);

struct SrocEntry {
  std::string test;
  std::string cutpoint;
  std::vector<double> fpr, se;            // summary cloud
  std::vector<double> pred_fpr, pred_se;  // predictive cloud (empty if not requested)
  Ellipse posterior, prediction;
};

/// One entry per test and threshold, pairing the Se and Sp estimands of the table.
std::vector<SrocEntry> sroc_data(const EstimandTable& table);
void write_sroc_points_csv(std::ostream& out, std::span<const SrocEntry> entries);
void write_sroc_ellipses_csv(std::ostream& out, std::span<const SrocEntry> entries);

}  // namespace mvplc

#endif  // MVPLC_ANALYSIS_HPP
