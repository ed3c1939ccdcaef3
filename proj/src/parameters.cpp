#include "mvplc/parameters.hpp"

#include <cmath>
#include <numbers>

namespace mvplc {

namespace {

std::string idx(std::initializer_list<std::size_t> xs) {
  std::string s = "[";
  bool first = true;
  for (auto x : xs) {
    if (!first) s += ',';
    s += std::to_string(x);
    first = false;
  }
  return s + "]";
}

std::string pair_idx(std::size_t i, std::size_t j) { return idx({std::min(i, j) + 1, std::max(i, j) + 1}); }

// log(1 - tanh(y)^2), stable for large |y|.
template <class T>
T log_sech2(const T& y) {
  using std::exp;
  using std::log1p;
  const double ln2 = std::numbers::ln2;
  if (value_of(y) >= 0) return 2.0 * (ln2 - y - log1p(exp(-2.0 * y)));
  return 2.0 * (ln2 + y - log1p(exp(2.0 * y)));
}

// sqrt(1 - tanh(y)^2) = 1 / cosh(y)
template <class T>
T sech(const T& y) {
  using std::exp;
  const T e = exp(value_of(y) >= 0 ? T(-y) : y);
  return 2.0 * e / (1.0 + e * e);
}

// Row-wise Cholesky factor of a correlation matrix whose masked-out entries
// are structurally zero. Adds log|d Psi_free / d y| to log_jac.
template <class T>
SquareMatrix<T> corr_cholesky(const T* y, const std::vector<std::pair<std::size_t, std::size_t>>& pairs, std::size_t n,
                              T& log_jac) {
  using std::log;
  using std::sqrt;
  using std::tanh;
  SquareMatrix<T> l(n, T(0.0));
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    T r = T(1.0);
    for (std::size_t j = 0; j < i; ++j) {
      if (k >= pairs.size() || pairs[k] != std::pair{i, j}) continue;
      const T z = tanh(y[k]);
      l(i, j) = z * sqrt(r);
      log_jac += log_sech2(y[k]) + 0.5 * log(r) + log(l(j, j));
      r = r * (1.0 - z * z);
      ++k;
    }
    l(i, i) = sqrt(r);
  }
  return l;
}

template <class T>
std::vector<T> ordered(const T* x, std::size_t n, T& log_jac) {
  using std::exp;
  std::vector<T> c(n);
  c[0] = x[0];
  for (std::size_t k = 1; k < n; ++k) {
    c[k] = c[k - 1] + exp(x[k]);
    log_jac += x[k];
  }
  return c;
}

// Stick-breaking simplex of length n_free + 1.
template <class T>
std::vector<T> simplex(const T* y, std::size_t n_free, T& log_jac) {
  using std::exp;
  std::vector<T> p(n_free + 1);
  T log_stick = T(0.0);
  for (std::size_t k = 0; k < n_free; ++k) {
    const T adj = y[k] - std::log(static_cast<double>(n_free - k));
    p[k] = exp(log_stick + log_inv_logit(adj));
    log_jac += log_stick + log_inv_logit(adj) + log_inv_logit(T(-adj));
    log_stick = log_stick + log_inv_logit(T(-adj));
  }
  p[n_free] = exp(log_stick);
  return p;
}

}  // namespace

ParameterLayout::ParameterLayout(const ModelSpec& spec, std::size_t num_studies)
    : spec_(spec), num_studies_(num_studies) {
  spec_.validate();
  if (num_studies == 0) throw SpecError("layout: no studies");
  pairs_ = spec_.mask.free_pairs();
  const std::size_t t_count = spec_.num_tests();
  sampled_index.assign(t_count, npos);
  ordinal_index.assign(t_count, npos);
  std::size_t cut_total = 0;
  for (std::size_t t = 0; t < t_count; ++t) {
    if (!spec_.perfect[t]) sampled_index[t] = num_sampled++;
    if (spec_.tests[t].is_ordinal()) {
      ordinal_index[t] = ordinal_tests.size();
      ordinal_tests.push_back(t);
      cut_offset_in_study.push_back(cut_total);
      cut_total += kClasses * static_cast<std::size_t>(spec_.tests[t].num_categories - 1);
    }
  }
  cut_stride = cut_total;
  const std::size_t f = pairs_.size();
  std::size_t pos = 0;
  auto add = [&](const char* name, std::size_t& offset, std::size_t n) {
    offset = pos;
    blocks_.push_back({name, pos, n});
    pos += n;
  };
  add("mu", mu, 2 * num_sampled);
  add("sigma", sigma, 2 * num_sampled);
  add("rho", rho, num_sampled);
  add("nu_raw", nu_raw, 2 * num_sampled * num_studies);
  add("prevalence", prev, num_studies);
  add("Psi_G", psi_g, 2 * f);
  add("beta", beta, f ? 2 : 0);
  add("Psi_Delta", psi_delta, 2 * f * num_studies);
  add("kappa", kappa, 2 * ordinal_tests.size());
  add("phi", phi, cut_total);
  add("cutpoints", cut, cut_total * num_studies);
  size_ = pos;
}

const ParameterBlock& ParameterLayout::block_of(std::size_t i) const {
  for (const auto& b : blocks_)
    if (i >= b.offset && i < b.offset + b.size) return b;
  throw SpecError("layout: index out of range");
}

std::vector<std::string> ParameterLayout::unconstrained_names() const {
  std::vector<std::string> n(size_);
  const std::size_t t_count = num_tests();
  for (std::size_t t = 0; t < t_count; ++t) {
    const std::size_t j = sampled_index[t];
    if (j == npos) continue;
    const bool gap = t == spec_.reference_test;
    n[mu + 2 * j] = "mu" + idx({t + 1, 0});
    n[mu + 2 * j + 1] = gap ? "mu_gap_log" + idx({t + 1}) : "mu" + idx({t + 1, 1});
    for (std::size_t d = 0; d < kClasses; ++d) n[sigma + 2 * j + d] = "sigma_log" + idx({t + 1, d});
    n[rho + j] = "rho_atanh" + idx({t + 1});
    for (std::size_t s = 0; s < num_studies_; ++s)
      for (std::size_t d = 0; d < kClasses; ++d)
        n[nu_raw + (s * num_sampled + j) * 2 + d] = "nu_raw" + idx({s + 1, t + 1, d});
  }
  for (std::size_t s = 0; s < num_studies_; ++s) n[prev + s] = "prevalence_logit" + idx({s + 1});
  const std::size_t f = pairs_.size();
  for (std::size_t d = 0; d < kClasses && f; ++d) {
    n[beta + d] = "beta_logit" + idx({d});
    for (std::size_t k = 0; k < f; ++k) {
      const auto [i, j] = pairs_[k];
      n[psi_g + d * f + k] = "Psi_G_raw" + idx({d}) + pair_idx(i, j);
      for (std::size_t s = 0; s < num_studies_; ++s)
        n[psi_delta + (s * kClasses + d) * f + k] = "Psi_Delta_raw" + idx({s + 1, d}) + pair_idx(i, j);
    }
  }
  for (std::size_t o = 0; o < ordinal_tests.size(); ++o) {
    const std::size_t t = ordinal_tests[o];
    const std::size_t km1 = static_cast<std::size_t>(spec_.tests[t].num_categories - 1);
    for (std::size_t d = 0; d < kClasses; ++d) {
      n[kappa + 2 * o + d] = "kappa_log" + idx({t + 1, d});
      for (std::size_t k = 0; k < km1; ++k) {
        n[phi + cut_offset_in_study[o] + d * km1 + k] = "phi_raw" + idx({t + 1, d}) + idx({k + 1});
        for (std::size_t s = 0; s < num_studies_; ++s)
          n[cut + s * cut_stride + cut_offset_in_study[o] + d * km1 + k] =
              "C_raw" + idx({s + 1, t + 1, d}) + idx({k + 1});
      }
    }
  }
  return n;
}

template <class T>
ParameterState<T> constrain(const ParameterLayout& layout, std::span<const T> x) {
  using std::exp;
  using std::tanh;
  if (x.size() != layout.size())
    throw MathError("parameter vector has length " + std::to_string(x.size()) + ", layout expects " +
                    std::to_string(layout.size()));
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!std::isfinite(value_of(x[i])))
      throw MathError("non-finite unconstrained value in block '" + layout.block_of(i).name + "'");

  const ModelSpec& spec = layout.spec();
  const std::size_t t_count = spec.num_tests();
  const std::size_t s_count = layout.num_studies();
  ParameterState<T> st;
  st.log_jacobian = T(0.0);
  T& lj = st.log_jacobian;

  st.mu.resize(t_count);
  st.sigma.resize(t_count);
  st.rho.assign(t_count, T(0.0));
  for (std::size_t t = 0; t < t_count; ++t) {
    const std::size_t j = layout.sampled_index[t];
    if (j == ParameterLayout::npos) {
      st.mu[t] = {T(-kPerfectMean), T(kPerfectMean)};
      st.sigma[t] = {T(0.0), T(0.0)};
      continue;
    }
    const T& m0 = x[layout.mu + 2 * j];
    const T& m1 = x[layout.mu + 2 * j + 1];
    if (t == spec.reference_test) {
      st.mu[t] = {m0, m0 + exp(m1)};
      lj += m1;
    } else {
      st.mu[t] = {m0, m1};
    }
    for (std::size_t d = 0; d < kClasses; ++d) {
      const T& v = x[layout.sigma + 2 * j + d];
      st.sigma[t][d] = exp(v);
      lj += v;
    }
    const T& r = x[layout.rho + j];
    st.rho[t] = tanh(r);
    lj += log_sech2(r);
  }

  st.nu_raw.assign(s_count, std::vector<ClassPair<T>>(t_count, {T(0.0), T(0.0)}));
  st.nu.assign(s_count, std::vector<ClassPair<T>>(t_count));
  for (std::size_t s = 0; s < s_count; ++s) {
    for (std::size_t t = 0; t < t_count; ++t) {
      const std::size_t j = layout.sampled_index[t];
      if (j == ParameterLayout::npos) {
        st.nu[s][t] = st.mu[t];
        continue;
      }
      const std::size_t base = layout.nu_raw + (s * layout.num_sampled + j) * 2;
      const T& z0 = x[base];
      const T& z1 = x[base + 1];
      st.nu_raw[s][t] = {z0, z1};
      const T& r = x[layout.rho + j];
      st.nu[s][t][0] = st.mu[t][0] + st.sigma[t][0] * z0;
      st.nu[s][t][1] = st.mu[t][1] + st.sigma[t][1] * (st.rho[t] * z0 + sech(r) * z1);
    }
  }

  st.prevalence.resize(s_count);
  for (std::size_t s = 0; s < s_count; ++s) {
    const T& v = x[layout.prev + s];
    st.prevalence[s] = inv_logit(v);
    lj += log_inv_logit(v) + log_inv_logit(T(-v));
  }

  const auto& pairs = layout.free_pairs();
  const std::size_t f = pairs.size();
  st.beta = {T(0.0), T(0.0)};
  if (f) {
    for (std::size_t d = 0; d < kClasses; ++d) {
      st.chol_g[d] = corr_cholesky(&x[layout.psi_g + d * f], pairs, t_count, lj);
      const T& v = x[layout.beta + d];
      st.beta[d] = inv_logit(v);
      lj += log_inv_logit(v) + log_inv_logit(T(-v));
    }
    st.chol_delta.resize(s_count);
    for (std::size_t s = 0; s < s_count; ++s)
      for (std::size_t d = 0; d < kClasses; ++d)
        st.chol_delta[s][d] = corr_cholesky(&x[layout.psi_delta + (s * kClasses + d) * f], pairs, t_count, lj);
  }

  st.kappa.assign(t_count, {T(0.0), T(0.0)});
  st.phi.resize(t_count);
  st.cut.assign(s_count, std::vector<ClassPair<std::vector<T>>>(t_count));
  for (std::size_t o = 0; o < layout.ordinal_tests.size(); ++o) {
    const std::size_t t = layout.ordinal_tests[o];
    const std::size_t km1 = static_cast<std::size_t>(spec.tests[t].num_categories - 1);
    for (std::size_t d = 0; d < kClasses; ++d) {
      const T& v = x[layout.kappa + 2 * o + d];
      st.kappa[t][d] = exp(v);
      lj += v;
      st.phi[t][d] = simplex(&x[layout.phi + layout.cut_offset_in_study[o] + d * km1], km1, lj);
      for (std::size_t s = 0; s < s_count; ++s)
        st.cut[s][t][d] =
            ordered(&x[layout.cut + s * layout.cut_stride + layout.cut_offset_in_study[o] + d * km1], km1, lj);
    }
  }
  return st;
}

template ParameterState<double> constrain<double>(const ParameterLayout&, std::span<const double>);
template ParameterState<ad::Var> constrain<ad::Var>(const ParameterLayout&, std::span<const ad::Var>);

std::vector<double> unconstrain(const ParameterLayout& layout, const ParameterState<double>& st) {
  const ModelSpec& spec = layout.spec();
  const std::size_t t_count = spec.num_tests();
  const std::size_t s_count = layout.num_studies();
  std::vector<double> x(layout.size(), 0.0);
  for (std::size_t t = 0; t < t_count; ++t) {
    const std::size_t j = layout.sampled_index[t];
    if (j == ParameterLayout::npos) continue;
    x[layout.mu + 2 * j] = st.mu[t][0];
    if (t == spec.reference_test) {
      if (!(st.mu[t][1] > st.mu[t][0])) throw MathError("unconstrain: reference test needs mu[1] > mu[0]");
      x[layout.mu + 2 * j + 1] = std::log(st.mu[t][1] - st.mu[t][0]);
    } else {
      x[layout.mu + 2 * j + 1] = st.mu[t][1];
    }
    for (std::size_t d = 0; d < kClasses; ++d) x[layout.sigma + 2 * j + d] = std::log(st.sigma[t][d]);
    x[layout.rho + j] = std::atanh(st.rho[t]);
    const double c = std::sqrt(1.0 - st.rho[t] * st.rho[t]);
    for (std::size_t s = 0; s < s_count; ++s) {
      const double z0 = (st.nu[s][t][0] - st.mu[t][0]) / st.sigma[t][0];
      const double z1 = ((st.nu[s][t][1] - st.mu[t][1]) / st.sigma[t][1] - st.rho[t] * z0) / c;
      const std::size_t base = layout.nu_raw + (s * layout.num_sampled + j) * 2;
      x[base] = z0;
      x[base + 1] = z1;
    }
  }
  for (std::size_t s = 0; s < s_count; ++s) x[layout.prev + s] = logit(st.prevalence[s]);

  const auto& pairs = layout.free_pairs();
  const std::size_t f = pairs.size();
  auto angles = [&](const Matrix& l, double* y) {
    std::size_t k = 0;
    for (std::size_t i = 0; i < t_count; ++i) {
      double r = 1.0;
      for (std::size_t j = 0; j < i; ++j) {
        if (k >= f || pairs[k] != std::pair{i, j}) continue;
        const double z = l(i, j) / std::sqrt(r);
        y[k++] = std::atanh(z);
        r *= 1.0 - z * z;
      }
    }
  };
  if (f) {
    for (std::size_t d = 0; d < kClasses; ++d) {
      angles(st.chol_g[d], &x[layout.psi_g + d * f]);
      x[layout.beta + d] = logit(st.beta[d]);
      for (std::size_t s = 0; s < s_count; ++s)
        angles(st.chol_delta[s][d], &x[layout.psi_delta + (s * kClasses + d) * f]);
    }
  }
  for (std::size_t o = 0; o < layout.ordinal_tests.size(); ++o) {
    const std::size_t t = layout.ordinal_tests[o];
    const std::size_t km1 = static_cast<std::size_t>(spec.tests[t].num_categories - 1);
    for (std::size_t d = 0; d < kClasses; ++d) {
      x[layout.kappa + 2 * o + d] = std::log(st.kappa[t][d]);
      double* y = &x[layout.phi + layout.cut_offset_in_study[o] + d * km1];
      double stick = 1.0;
      for (std::size_t k = 0; k < km1; ++k) {
        y[k] = logit(st.phi[t][d][k] / stick) + std::log(static_cast<double>(km1 - k));
        stick -= st.phi[t][d][k];
      }
      for (std::size_t s = 0; s < s_count; ++s) {
        const auto& c = st.cut[s][t][d];
        double* u = &x[layout.cut + s * layout.cut_stride + layout.cut_offset_in_study[o] + d * km1];
        u[0] = c[0];
        for (std::size_t k = 1; k < km1; ++k) u[k] = std::log(c[k] - c[k - 1]);
      }
    }
  }
  return x;
}

Matrix correlation_from_cholesky(const Matrix& l) {
  const std::size_t n = l.dim();
  Matrix psi(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double v = 0.0;
      for (std::size_t k = 0; k <= std::min(i, j); ++k) v += l(i, k) * l(j, k);
      psi(i, j) = v;
    }
  return psi;
}

std::vector<double> summary_cutpoints(std::span<const double> phi) { return probs_to_cutpoints(phi, 0.0); }

std::vector<double> free_coordinates(const ParameterLayout& layout, const ParameterState<double>& st) {
  const ModelSpec& spec = layout.spec();
  const std::size_t t_count = spec.num_tests();
  const std::size_t s_count = layout.num_studies();
  std::vector<double> v(layout.size(), 0.0);
  for (std::size_t t = 0; t < t_count; ++t) {
    const std::size_t j = layout.sampled_index[t];
    if (j == ParameterLayout::npos) continue;
    v[layout.mu + 2 * j] = st.mu[t][0];
    v[layout.mu + 2 * j + 1] = st.mu[t][1];
    for (std::size_t d = 0; d < kClasses; ++d) v[layout.sigma + 2 * j + d] = st.sigma[t][d];
    v[layout.rho + j] = st.rho[t];
    for (std::size_t s = 0; s < s_count; ++s)
      for (std::size_t d = 0; d < kClasses; ++d)
        v[layout.nu_raw + (s * layout.num_sampled + j) * 2 + d] = st.nu_raw[s][t][d];
  }
  for (std::size_t s = 0; s < s_count; ++s) v[layout.prev + s] = st.prevalence[s];
  const auto& pairs = layout.free_pairs();
  const std::size_t f = pairs.size();
  if (f) {
    for (std::size_t d = 0; d < kClasses; ++d) {
      const Matrix g = correlation_from_cholesky(st.chol_g[d]);
      for (std::size_t k = 0; k < f; ++k) v[layout.psi_g + d * f + k] = g(pairs[k].first, pairs[k].second);
      v[layout.beta + d] = st.beta[d];
      for (std::size_t s = 0; s < s_count; ++s) {
        const Matrix m = correlation_from_cholesky(st.chol_delta[s][d]);
        for (std::size_t k = 0; k < f; ++k)
          v[layout.psi_delta + (s * kClasses + d) * f + k] = m(pairs[k].first, pairs[k].second);
      }
    }
  }
  for (std::size_t o = 0; o < layout.ordinal_tests.size(); ++o) {
    const std::size_t t = layout.ordinal_tests[o];
    const std::size_t km1 = static_cast<std::size_t>(spec.tests[t].num_categories - 1);
    for (std::size_t d = 0; d < kClasses; ++d) {
      v[layout.kappa + 2 * o + d] = st.kappa[t][d];
      for (std::size_t k = 0; k < km1; ++k) {
        v[layout.phi + layout.cut_offset_in_study[o] + d * km1 + k] = st.phi[t][d][k];
        for (std::size_t s = 0; s < s_count; ++s)
          v[layout.cut + s * layout.cut_stride + layout.cut_offset_in_study[o] + d * km1 + k] = st.cut[s][t][d][k];
      }
    }
  }
  return v;
}

namespace {

template <class Emit>
void visit_constrained(const ParameterLayout& layout, const ParameterState<double>* st, Emit&& emit) {
  const ModelSpec& spec = layout.spec();
  const std::size_t t_count = spec.num_tests();
  const std::size_t s_count = layout.num_studies();
  auto val = [&](auto f) { return st ? f() : 0.0; };
  for (std::size_t t = 0; t < t_count; ++t) {
    if (layout.sampled_index[t] == ParameterLayout::npos) continue;
    for (std::size_t d = 0; d < kClasses; ++d) emit("mu" + idx({t + 1, d}), val([&] { return st->mu[t][d]; }));
    for (std::size_t d = 0; d < kClasses; ++d)
      emit("sigma" + idx({t + 1, d}), val([&] { return st->sigma[t][d]; }));
    emit("rho" + idx({t + 1}), val([&] { return st->rho[t]; }));
  }
  for (std::size_t s = 0; s < s_count; ++s)
    for (std::size_t t = 0; t < t_count; ++t) {
      if (layout.sampled_index[t] == ParameterLayout::npos) continue;
      for (std::size_t d = 0; d < kClasses; ++d)
        emit("nu" + idx({s + 1, t + 1, d}), val([&] { return st->nu[s][t][d]; }));
    }
  for (std::size_t s = 0; s < s_count; ++s)
    emit("prevalence" + idx({s + 1}), val([&] { return st->prevalence[s]; }));
  const auto& pairs = layout.free_pairs();
  if (!pairs.empty()) {
    for (std::size_t d = 0; d < kClasses; ++d) {
      const Matrix g = st ? correlation_from_cholesky(st->chol_g[d]) : Matrix();
      for (const auto& [i, j] : pairs) emit("Psi_G" + idx({d}) + pair_idx(i, j), val([&] { return g(i, j); }));
    }
    for (std::size_t d = 0; d < kClasses; ++d) emit("beta" + idx({d}), val([&] { return st->beta[d]; }));
    for (std::size_t s = 0; s < s_count; ++s)
      for (std::size_t d = 0; d < kClasses; ++d) {
        const Matrix m = st ? correlation_from_cholesky(st->chol_delta[s][d]) : Matrix();
        for (const auto& [i, j] : pairs)
          emit("Psi_Delta" + idx({s + 1, d}) + pair_idx(i, j), val([&] { return m(i, j); }));
      }
  }
  for (std::size_t t : layout.ordinal_tests) {
    const std::size_t k_count = static_cast<std::size_t>(spec.tests[t].num_categories);
    for (std::size_t d = 0; d < kClasses; ++d) {
      emit("kappa" + idx({t + 1, d}), val([&] { return st->kappa[t][d]; }));
      for (std::size_t k = 0; k < k_count; ++k)
        emit("phi" + idx({t + 1, d}) + idx({k + 1}), val([&] { return st->phi[t][d][k]; }));
      const std::vector<double> cg = st ? summary_cutpoints(st->phi[t][d]) : std::vector<double>(k_count - 1);
      for (std::size_t k = 0; k + 1 < k_count; ++k) emit("C_G" + idx({t + 1, d}) + idx({k + 1}), cg[k]);
    }
  }
  for (std::size_t s = 0; s < s_count; ++s)
    for (std::size_t t : layout.ordinal_tests)
      for (std::size_t d = 0; d < kClasses; ++d)
        for (std::size_t k = 0; k + 1 < static_cast<std::size_t>(spec.tests[t].num_categories); ++k)
          emit("C" + idx({s + 1, t + 1, d}) + idx({k + 1}), val([&] { return st->cut[s][t][d][k]; }));
}

}  // namespace

std::vector<std::string> constrained_names(const ParameterLayout& layout) {
  std::vector<std::string> out;
  visit_constrained(layout, nullptr, [&](std::string n, double) { out.push_back(std::move(n)); });
  return out;
}

std::vector<double> constrained_values(const ParameterLayout& layout, const ParameterState<double>& state) {
  std::vector<double> out;
  visit_constrained(layout, &state, [&](const std::string&, double v) { out.push_back(v); });
  return out;
}

}  // namespace mvplc
