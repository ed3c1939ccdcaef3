#include "mvplc/model.hpp"

#include <cmath>
#include <map>

#include "mvplc/prior.hpp"

namespace mvplc {

namespace {

template <class T>
SquareMatrix<T> gram(const SquareMatrix<T>& l) {
  const std::size_t n = l.dim();
  SquareMatrix<T> out(n, T(0.0));
  for (std::size_t i = 0; i < n; ++i) {
    out(i, i) = T(1.0);
    for (std::size_t j = 0; j < i; ++j) {
      T v = l(i, 0) * l(j, 0);
      for (std::size_t k = 1; k <= j; ++k) v += l(i, k) * l(j, k);
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

Matrix values(const SquareMatrix<ad::Var>& m) {
  Matrix out(m.dim());
  for (std::size_t i = 0; i < m.dim(); ++i)
    for (std::size_t j = 0; j < m.dim(); ++j) out(i, j) = m(i, j).val();
  return out;
}

ParameterState<double> values(const ParameterState<ad::Var>& v) {
  ParameterState<double> d;
  auto pair = [](const ClassPair<ad::Var>& p) { return ClassPair<double>{p[0].val(), p[1].val()}; };
  for (const auto& m : v.mu) d.mu.push_back(pair(m));
  for (const auto& m : v.sigma) d.sigma.push_back(pair(m));
  for (const auto& r : v.rho) d.rho.push_back(r.val());
  for (const auto& row : v.nu_raw) {
    d.nu_raw.emplace_back();
    for (const auto& p : row) d.nu_raw.back().push_back(pair(p));
  }
  for (const auto& row : v.nu) {
    d.nu.emplace_back();
    for (const auto& p : row) d.nu.back().push_back(pair(p));
  }
  for (const auto& p : v.prevalence) d.prevalence.push_back(p.val());
  d.beta = pair(v.beta);
  for (std::size_t c = 0; c < kClasses; ++c)
    if (v.chol_g[c].dim()) d.chol_g[c] = values(v.chol_g[c]);
  for (const auto& pr : v.chol_delta) d.chol_delta.push_back({values(pr[0]), values(pr[1])});
  for (const auto& k : v.kappa) d.kappa.push_back(pair(k));
  for (const auto& pr : v.phi) {
    ClassPair<std::vector<double>> out;
    for (std::size_t c = 0; c < kClasses; ++c)
      for (const auto& x : pr[c]) out[c].push_back(x.val());
    d.phi.push_back(std::move(out));
  }
  for (const auto& row : v.cut) {
    d.cut.emplace_back();
    for (const auto& pr : row) {
      ClassPair<std::vector<double>> out;
      for (std::size_t c = 0; c < kClasses; ++c)
        for (const auto& x : pr[c]) out[c].push_back(x.val());
      d.cut.back().push_back(std::move(out));
    }
  }
  d.log_jacobian = v.log_jacobian.val();
  return d;
}

}  // namespace

BoxBounds box_bounds(const Pattern& y, std::span<const TestDefinition> tests, const ParameterState<double>& st,
                     std::size_t s, std::size_t d) {
  const std::size_t n = tests.size();
  BoxBounds b;
  b.lower.resize(n);
  b.upper.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double nu = st.nu[s][t][d];
    if (tests[t].is_ordinal()) {
      const auto& c = st.cut[s][t][d];
      const int k = tests[t].num_categories;
      b.lower[t] = y[t] > 0 ? c[static_cast<std::size_t>(y[t] - 1)] - nu : -kInf;
      b.upper[t] = y[t] < k - 1 ? c[static_cast<std::size_t>(y[t])] - nu : kInf;
    } else {
      b.lower[t] = y[t] == 1 ? -nu : -kInf;
      b.upper[t] = y[t] == 1 ? kInf : -nu;
    }
  }
  return b;
}

template <class T>
SquareMatrix<T> study_cholesky(const ParameterLayout& layout, const ParameterState<T>& st, std::size_t s,
                               std::size_t d) {
  if (!layout.dependent()) return SquareMatrix<T>::identity(layout.num_tests());
  const SquareMatrix<T> pooled = pool_correlation(gram(st.chol_g[d]), gram(st.chol_delta[s][d]), st.beta[d]);
  return cholesky(pooled);
}

template SquareMatrix<double> study_cholesky<double>(const ParameterLayout&, const ParameterState<double>&,
                                                     std::size_t, std::size_t);
template SquareMatrix<ad::Var> study_cholesky<ad::Var>(const ParameterLayout&, const ParameterState<ad::Var>&,
                                                       std::size_t, std::size_t);

struct Model::StudyGrad {
  ClassPair<Matrix> chol;  // factors used for this study
  double prevalence = 0.0;
  std::vector<ClassPair<double>> nu;
  std::vector<ClassPair<std::vector<double>>> cut;
};

Model::Model(ModelSpec spec, const MetaDataset& data)
    : layout_(spec, data.num_studies()),
      data_(data),
      nodes_(spec.num_tests() > 1 ? spec.num_tests() - 1 : 0, static_cast<std::size_t>(spec.ghk_nodes), spec.ghk_seed) {
  const auto tests = data_.tests();
  if (tests.size() != spec.num_tests()) throw SpecError("model and dataset disagree on the number of tests");
  for (std::size_t t = 0; t < tests.size(); ++t)
    if (tests[t].kind != spec.tests[t].kind || tests[t].num_categories != spec.tests[t].num_categories)
      throw SpecError("model and dataset disagree on test '" + tests[t].label + "'");
  for (const auto& s : data_.studies()) {
    StudyPatterns sp;
    std::map<Pattern, std::size_t> index;
    for (const auto& y : s.individuals) {
      auto [it, inserted] = index.try_emplace(y, sp.patterns.size());
      if (inserted) {
        sp.patterns.push_back(y);
        sp.counts.push_back(0.0);
      }
      sp.counts[it->second] += 1.0;
      sp.individual_pattern.push_back(it->second);
    }
    studies_.push_back(std::move(sp));
  }
}

void Model::study_terms(const ParameterState<double>& st, std::size_t s, std::span<const Pattern> patterns,
                        std::span<const double> weights, std::vector<double>& ell, StudyGrad* grad,
                        EvalInfo* info) const {
  const auto tests = data_.tests();
  const std::size_t n = tests.size();
  ClassPair<Matrix> local;
  const ClassPair<Matrix>* chol = grad ? &grad->chol : &local;
  if (!grad)
    for (std::size_t d = 0; d < kClasses; ++d) local[d] = study_cholesky(layout_, st, s, d);
  if (grad) {
    grad->prevalence = 0.0;
    grad->nu.assign(n, {0.0, 0.0});
    grad->cut.assign(n, {});
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t d = 0; d < kClasses; ++d) grad->cut[t][d].assign(st.cut[s][t][d].size(), 0.0);
  }
  ClassPair<Matrix> chol_grad;
  if (grad)
    for (std::size_t d = 0; d < kClasses; ++d) chol_grad[d] = Matrix(n, 0.0);

  const double p = st.prevalence[s];
  const double log_p = std::log(p);
  const double log_q = std::log1p(-p);
  ell.resize(patterns.size());
  GhkGradient g[kClasses];
  for (std::size_t u = 0; u < patterns.size(); ++u) {
    const Pattern& y = patterns[u];
    double prob[kClasses];
    bool floored[kClasses];
    for (std::size_t d = 0; d < kClasses; ++d) {
      const GhkResult r = box_probability(box_bounds(y, tests, st, s, d), (*chol)[d], nodes_, grad ? &g[d] : nullptr);
      prob[d] = r.probability;
      floored[d] = r.floored;
      if (r.floored && info) ++info->floored;
    }
    const double l1 = log_p + std::log(prob[1]);
    const double l0 = log_q + std::log(prob[0]);
    ell[u] = log_sum_exp(l0, l1);
    if (!grad) continue;
    const double c = weights[u];
    const double w1 = std::exp(l1 - ell[u]);
    const double w0 = std::exp(l0 - ell[u]);
    grad->prevalence += c * (w1 / p - w0 / (1.0 - p));
    const double w[kClasses] = {w0, w1};
    for (std::size_t d = 0; d < kClasses; ++d) {
      if (floored[d]) continue;
      const double f = c * w[d] / prob[d];
      for (std::size_t t = 0; t < n; ++t) {
        const double gl = g[d].lower[t], gu = g[d].upper[t];
        grad->nu[t][d] -= f * (gl + gu);
        if (tests[t].is_ordinal()) {
          auto& gc = grad->cut[t][d];
          if (y[t] > 0) gc[static_cast<std::size_t>(y[t] - 1)] += f * gl;
          if (y[t] < tests[t].num_categories - 1) gc[static_cast<std::size_t>(y[t])] += f * gu;
        }
      }
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) chol_grad[d](i, j) += f * g[d].chol(i, j);
    }
  }
  if (grad) grad->chol = std::move(chol_grad);
}

std::vector<double> Model::pointwise_loglik(const ParameterState<double>& st, EvalInfo* info) const {
  std::vector<double> out;
  out.reserve(data_.num_individuals());
  std::vector<double> ell;
  for (std::size_t s = 0; s < studies_.size(); ++s) {
    study_terms(st, s, studies_[s].patterns, studies_[s].counts, ell, nullptr, info);
    for (std::size_t idx : studies_[s].individual_pattern) out.push_back(ell[idx]);
  }
  return out;
}

double Model::data_loglik(const ParameterState<double>& st, EvalInfo* info) const {
  return pairwise_sum(pointwise_loglik(st, info));
}

double Model::individual_loglik(const Pattern& y, const ParameterState<double>& st, std::size_t s,
                                EvalInfo* info) const {
  if (y.size() != data_.num_tests()) throw DataError("response vector has the wrong number of tests");
  std::vector<double> ell;
  const double one = 1.0;
  study_terms(st, s, std::span<const Pattern>(&y, 1), std::span<const double>(&one, 1), ell, nullptr, info);
  return ell[0];
}

double Model::class_probability(const Pattern& y, const ParameterState<double>& st, std::size_t s, std::size_t d,
                                EvalInfo* info) const {
  const GhkResult r = box_probability(box_bounds(y, data_.tests(), st, s, d), study_cholesky(layout_, st, s, d), nodes_);
  if (r.floored && info) ++info->floored;
  return r.probability;
}

double Model::log_density(std::span<const double> x, EvalInfo* info) const {
  const ParameterState<double> st = constrain<double>(layout_, x);
  const double prior = log_prior(layout_, st);
  const double data = data_loglik(st, info);
  const double v = prior + st.log_jacobian + data;
  if (!std::isfinite(v)) {
    const char* where = !std::isfinite(data) ? "likelihood" : !std::isfinite(st.log_jacobian) ? "transform Jacobian"
                                                                                              : "prior";
    throw NonFiniteError(std::string("non-finite log density in the ") + where);
  }
  return v;
}

double Model::log_density_gradient(std::span<const double> x, std::span<double> grad, EvalInfo* info) const {
  using ad::Var;
  if (grad.size() != x.size()) throw MathError("gradient buffer has the wrong length");
  ad::Tape& tape = ad::tape();
  tape.clear();
  std::vector<Var> xv;
  xv.reserve(x.size());
  for (double v : x) xv.emplace_back(v);

  const ParameterState<Var> sv = constrain<Var>(layout_, std::span<const Var>(xv));
  const Var prior = log_prior(layout_, sv);
  const ParameterState<double> sd = values(sv);

  std::vector<Var> inputs;
  std::vector<double> partials;
  std::vector<double> pointwise;
  pointwise.reserve(data_.num_individuals());
  std::vector<double> ell;
  StudyGrad sg;
  const std::size_t n = data_.num_tests();
  for (std::size_t s = 0; s < studies_.size(); ++s) {
    ClassPair<SquareMatrix<Var>> lv;
    for (std::size_t d = 0; d < kClasses; ++d) {
      lv[d] = study_cholesky(layout_, sv, s, d);
      sg.chol[d] = values(lv[d]);
    }
    study_terms(sd, s, studies_[s].patterns, studies_[s].counts, ell, &sg, info);
    for (std::size_t idx : studies_[s].individual_pattern) pointwise.push_back(ell[idx]);

    inputs.push_back(sv.prevalence[s]);
    partials.push_back(sg.prevalence);
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t d = 0; d < kClasses; ++d) {
        if (layout_.sampled_index[t] != ParameterLayout::npos) {
          inputs.push_back(sv.nu[s][t][d]);
          partials.push_back(sg.nu[t][d]);
        }
        for (std::size_t k = 0; k < sg.cut[t][d].size(); ++k) {
          inputs.push_back(sv.cut[s][t][d][k]);
          partials.push_back(sg.cut[t][d][k]);
        }
      }
    if (layout_.dependent())
      for (std::size_t d = 0; d < kClasses; ++d)
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j <= i; ++j) {
            inputs.push_back(lv[d](i, j));
            partials.push_back(sg.chol[d](i, j));
          }
  }
  const double data_value = pairwise_sum(pointwise);
  const Var data = ad::precomputed(data_value, inputs, partials);
  const Var total = prior + sv.log_jacobian + data;
  const double v = total.val();
  if (!std::isfinite(v)) {
    const char* where = !std::isfinite(data_value)          ? "likelihood"
                        : !std::isfinite(sd.log_jacobian) ? "transform Jacobian"
                                                          : "prior";
    throw NonFiniteError(std::string("non-finite log density in the ") + where);
  }
  tape.backward(total.id());
  for (std::size_t i = 0; i < x.size(); ++i) {
    grad[i] = xv[i].adj();
    if (!std::isfinite(grad[i]))
      throw NonFiniteError("non-finite gradient in block '" + layout_.block_of(i).name + "'");
  }
  return v;
}

}  // namespace mvplc
