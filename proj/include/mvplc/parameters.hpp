#ifndef MVPLC_PARAMETERS_HPP
#define MVPLC_PARAMETERS_HPP

// Flat unconstrained parameter vector <-> constrained model state.
//
// Class index d: 0 = non-diseased, 1 = diseased. Blocks, in vector order:
//   mu        per sampled test, (d=0, d=1). For the reference test the second
//             entry is log(mu1 - mu0), which enforces mu1 > mu0.
//   sigma     per sampled test, log scale
//   rho       per sampled test, atanh scale
//   nu_raw    per study, per sampled test, two standard-normal innovations
//   prev      per study, logit scale
//   Psi_G     (dependence only) per class, one angle per free pair
//   beta      (dependence only) per class, logit scale
//   Psi_Delta (dependence only) per study, per class, one angle per free pair
//   kappa     per ordinal test, per class, log scale
//   phi       per ordinal test, per class, K-1 stick-breaking coordinates
//   cut       per study, per ordinal test, per class, K-1 ordered coordinates
//
// "Sampled" tests are all tests except a reference pinned as perfect.

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mvplc/ad.hpp"
#include "mvplc/math.hpp"
#include "mvplc/spec.hpp"

namespace mvplc {

struct ParameterBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

class ParameterLayout {
 public:
  ParameterLayout(const ModelSpec& spec, std::size_t num_studies);

  const ModelSpec& spec() const { return spec_; }
  std::size_t num_studies() const { return num_studies_; }
  std::size_t num_tests() const { return spec_.num_tests(); }
  std::size_t size() const { return size_; }
  bool dependent() const { return !pairs_.empty(); }
  const std::vector<std::pair<std::size_t, std::size_t>>& free_pairs() const { return pairs_; }
  std::span<const ParameterBlock> blocks() const { return blocks_; }

  /// Block containing unconstrained index i (for error messages).
  const ParameterBlock& block_of(std::size_t i) const;
  /// One name per unconstrained coordinate, e.g. "sigma_log[2,1]".
  std::vector<std::string> unconstrained_names() const;

  /// Offsets (public so the transform and tests can address blocks directly).
  std::size_t mu = 0, sigma = 0, rho = 0, nu_raw = 0, prev = 0, psi_g = 0, beta = 0, psi_delta = 0, kappa = 0,
              phi = 0, cut = 0;
  /// Per test: position among sampled tests (or npos) and among ordinal tests.
  std::vector<std::size_t> sampled_index, ordinal_index;
  std::vector<std::size_t> ordinal_tests;
  std::size_t num_sampled = 0;
  /// Cutpoint coordinates per (study, ordinal test, class) and per ordinal test.
  std::size_t cut_stride = 0;
  std::vector<std::size_t> cut_offset_in_study;  // per ordinal test index

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  ModelSpec spec_;
  std::size_t num_studies_;
  std::size_t size_ = 0;
  std::vector<std::pair<std::size_t, std::size_t>> pairs_;
  std::vector<ParameterBlock> blocks_;
};

template <class T>
using ClassPair = std::array<T, kClasses>;

template <class T>
struct ParameterState {
  std::vector<ClassPair<T>> mu, sigma;                 // [t][d]
  std::vector<T> rho;                                  // [t]
  std::vector<std::vector<ClassPair<T>>> nu_raw, nu;   // [s][t][d]
  std::vector<T> prevalence;                           // [s]
  ClassPair<SquareMatrix<T>> chol_g;                   // Cholesky factors of Psi_G
  ClassPair<T> beta;
  std::vector<ClassPair<SquareMatrix<T>>> chol_delta;  // [s]
  std::vector<ClassPair<T>> kappa;                     // [t], ordinal only
  std::vector<ClassPair<std::vector<T>>> phi;          // [t], population simplex
  std::vector<std::vector<ClassPair<std::vector<T>>>> cut;  // [s][t][d], ordinal only
  T log_jacobian;
};

/// Maps an unconstrained vector to the model state and accumulates the
/// log-Jacobian of every constraining transform. Throws MathError on
/// non-finite input.
template <class T>
ParameterState<T> constrain(const ParameterLayout& layout, std::span<const T> x);

/// Inverse of constrain for a valid state.
std::vector<double> unconstrain(const ParameterLayout& layout, const ParameterState<double>& state);

/// Every free constrained coordinate in unconstrained-vector order: the
/// image of the bijection whose log-Jacobian constrain reports.
std::vector<double> free_coordinates(const ParameterLayout& layout, const ParameterState<double>& state);

/// Summary cutpoints of an ordinal test: link quantiles of the cumulative population simplex.
std::vector<double> summary_cutpoints(std::span<const double> phi);

/// Psi = L L^T.
Matrix correlation_from_cholesky(const Matrix& l);

/// Named constrained output columns: mu[t,d], sigma[t,d], rho[t], nu[s,t,d],
/// prevalence[s], Psi_G[d][i,j], beta[d], Psi_Delta[s,d][i,j], kappa[t,d],
/// phi[t,d][k], C_G[t,d][k], C[s,t,d][k]. Tests and studies 1-based.
std::vector<std::string> constrained_names(const ParameterLayout& layout);
std::vector<double> constrained_values(const ParameterLayout& layout, const ParameterState<double>& state);

extern template ParameterState<double> constrain<double>(const ParameterLayout&, std::span<const double>);
extern template ParameterState<ad::Var> constrain<ad::Var>(const ParameterLayout&, std::span<const ad::Var>);

}  // namespace mvplc

#endif  // MVPLC_PARAMETERS_HPP
