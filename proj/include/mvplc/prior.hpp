#ifndef MVPLC_PRIOR_HPP
#define MVPLC_PRIOR_HPP

#include <cstddef>
#include <span>

#include "mvplc/parameters.hpp"
#include "mvplc/rng.hpp"
#include "mvplc/spec.hpp"

namespace mvplc {

/// Normal on the latent scale whose 2.5% and 97.5% points map through the
/// link to (lo, hi).
NormalPrior interval_to_probit_normal(double lo, double hi);

/// Half-normal scale whose 97.5% point equals hi.
double half_normal_scale_for_upper(double hi);

/// Scale s of x ~ N(0, s) such that tanh(x) has central 95% interval (-hi, hi).
double tanh_normal_scale_for_interval(double hi);

/// LKJ concentration eta for which each off-diagonal entry of a dim x dim
/// correlation matrix has central 95% interval (-hi, hi). The marginal is
/// 2 Beta(a, a) - 1 with a = eta - 1 + dim / 2.
double lkj_eta_for_interval(double hi, std::size_t dim);

/// Default priors: the reference test gets Se (0.49, 0.94) and Sp (0.82, 0.99),
/// other dichotomous tests (0.04, 0.96) for both, ordinal tests N(0, 1);
/// sigma 97.5% point 1.09; rho (-0.82, 0.82); within-study correlations
/// (-0.65, 0.65) calibrated to the mask's largest connected block.
PriorSpec default_priors(std::span<const TestDefinition> tests, std::size_t reference_test,
                         const CorrelationMask& mask);

/// Sum of all prior log-densities on the constrained state (no Jacobian).
template <class T>
T log_prior(const ParameterLayout& layout, const ParameterState<T>& state);

/// One draw from the joint prior. Correlation blocks must be cliques of the
/// mask (true for all-pairs, single-pair and block-diagonal structures).
ParameterState<double> sample_prior(const ParameterLayout& layout, CounterRng& rng);

/// LKJ(eta) draw of a dim x dim correlation matrix (C-vine construction).
Matrix sample_lkj_correlation(std::size_t dim, double eta, CounterRng& rng);

/// Cholesky factor of an LKJ draw respecting the mask (complete blocks only).
Matrix sample_mask_cholesky(const ParameterLayout& layout, CounterRng& rng);

double sample_beta(double a, double b, CounterRng& rng);

extern template double log_prior<double>(const ParameterLayout&, const ParameterState<double>&);
extern template ad::Var log_prior<ad::Var>(const ParameterLayout&, const ParameterState<ad::Var>&);

}  // namespace mvplc

#endif  // MVPLC_PRIOR_HPP
