#ifndef MVPLC_MODEL_HPP
#define MVPLC_MODEL_HPP

// Marginal likelihood of the two-class multivariate latent model and the full
// unnormalized log posterior over the unconstrained parameter vector.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvplc/data.hpp"
#include "mvplc/ghk.hpp"
#include "mvplc/parameters.hpp"
#include "mvplc/spec.hpp"

namespace mvplc {

/// A non-finite log density or gradient; the message names the offending block.
struct NonFiniteError : MathError {
  using MathError::MathError;
};

/// Bounds for response y in study s, class d, centered at the latent means.
BoxBounds box_bounds(const Pattern& y, std::span<const TestDefinition> tests, const ParameterState<double>& state,
                     std::size_t s, std::size_t d);

/// Cholesky factor of the pooled within-study correlation matrix (identity
/// under conditional independence).
template <class T>
SquareMatrix<T> study_cholesky(const ParameterLayout& layout, const ParameterState<T>& state, std::size_t s,
                               std::size_t d);

struct EvalInfo {
  std::size_t floored = 0;  // box probabilities clamped at the floor
};

class Model {
 public:
  Model(ModelSpec spec, const MetaDataset& data);

  const ParameterLayout& layout() const { return layout_; }
  const ModelSpec& spec() const { return layout_.spec(); }
  const MetaDataset& data() const { return data_; }
  const GhkNodes& nodes() const { return nodes_; }
  std::size_t dim() const { return layout_.size(); }

  /// Unnormalized log posterior: data + prior + transform log-Jacobian.
  double log_density(std::span<const double> x, EvalInfo* info = nullptr) const;
  /// Same value plus its exact gradient. Throws NonFiniteError.
  double log_density_gradient(std::span<const double> x, std::span<double> grad, EvalInfo* info = nullptr) const;

  ParameterState<double> state(std::span<const double> x) const { return constrain<double>(layout_, x); }

  /// log P(y) for study s; y need not occur in the data.
  double individual_loglik(const Pattern& y, const ParameterState<double>& state, std::size_t s,
                           EvalInfo* info = nullptr) const;
  /// P(box | class d) for study s.
  double class_probability(const Pattern& y, const ParameterState<double>& state, std::size_t s, std::size_t d,
                           EvalInfo* info = nullptr) const;
  /// Per-individual log-likelihoods in dataset order.
  std::vector<double> pointwise_loglik(const ParameterState<double>& state, EvalInfo* info = nullptr) const;
  /// Sum of pointwise_loglik, reduced in a fixed pairwise order.
  double data_loglik(const ParameterState<double>& state, EvalInfo* info = nullptr) const;

 private:
  struct StudyPatterns {
    std::vector<Pattern> patterns;
    std::vector<double> counts;
    std::vector<std::size_t> individual_pattern;  // per individual, dataset order
  };

  // Per-pattern log-likelihoods of study s; optional gradient hooks.
  struct StudyGrad;
  void study_terms(const ParameterState<double>& st, std::size_t s, std::span<const Pattern> patterns,
                   std::span<const double> weights, std::vector<double>& ell, StudyGrad* grad, EvalInfo* info) const;

  ParameterLayout layout_;
  MetaDataset data_;
  GhkNodes nodes_;
  std::vector<StudyPatterns> studies_;
};

}  // namespace mvplc

#endif  // MVPLC_MODEL_HPP
