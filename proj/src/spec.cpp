#include "mvplc/spec.hpp"

#include <algorithm>
#include <numeric>

namespace mvplc {

CorrelationMask CorrelationMask::all(std::size_t n) {
  CorrelationMask m(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) m.set(i, j);
  return m;
}

void CorrelationMask::set(std::size_t i, std::size_t j, bool on) {
  if (i >= n_ || j >= n_) throw SpecError("correlation mask: test index out of range");
  if (i == j) throw SpecError("correlation mask: a test cannot be paired with itself");
  free_[i * n_ + j] = on;
  free_[j * n_ + i] = on;
}

std::size_t CorrelationMask::num_free() const { return free_pairs().size(); }

std::vector<std::pair<std::size_t, std::size_t>> CorrelationMask::free_pairs() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = 0; j < i; ++j)
      if ((*this)(i, j)) out.emplace_back(i, j);
  return out;
}

std::size_t CorrelationMask::largest_block() const {
  std::vector<std::size_t> parent(n_);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& [i, j] : free_pairs()) parent[find(i)] = find(j);
  std::vector<std::size_t> size(n_, 0);
  std::size_t best = n_ ? 1 : 0;
  for (std::size_t i = 0; i < n_; ++i) best = std::max(best, ++size[find(i)]);
  return best;
}

void CorrelationMask::validate() const {
  // Symbolic Cholesky: entry (i, j) fills in when some earlier column k links
  // both rows. Fill-in on a masked-out pair would make the zero unreachable.
  std::vector<bool> nz(n_ * n_, false);
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      bool fill = (*this)(i, j);
      for (std::size_t k = 0; k < j && !fill; ++k) fill = nz[i * n_ + k] && nz[j * n_ + k];
      if (fill && !(*this)(i, j))
        throw SpecError("correlation mask: pair (" + std::to_string(i + 1) + "," + std::to_string(j + 1) +
                        ") must be free because of the other free pairs; reorder the tests or free the pair");
      nz[i * n_ + j] = fill;
    }
  }
}

void ModelSpec::validate() const {
  const std::size_t t = tests.size();
  if (t == 0) throw SpecError("model: no tests");
  for (const auto& def : tests) def.validate();
  if (perfect.size() != t) throw SpecError("model: perfect flags must list every test");
  if (reference_test >= t) throw SpecError("model: reference test out of range");
  for (std::size_t i = 0; i < t; ++i)
    if (perfect[i] && i != reference_test) throw SpecError("model: only the reference test may be pinned as perfect");
  if (perfect[reference_test] && tests[reference_test].is_ordinal())
    throw SpecError("model: a perfect reference test must be dichotomous");
  if (mask.dim() != t) throw SpecError("model: correlation mask dimension must equal the number of tests");
  mask.validate();
  if (priors.mu.size() != t || priors.sigma_scale.size() != t)
    throw SpecError("model: priors must list every test");
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t d = 0; d < kClasses; ++d) {
      if (!(priors.mu[i][d].scale > 0)) throw SpecError("priors: mu scale must be positive");
      if (!(priors.sigma_scale[i][d] > 0)) throw SpecError("priors: sigma scale must be positive");
    }
  if (!(priors.rho_scale > 0) || !(priors.lkj_eta > 0) || !(priors.kappa_scale > 0) || !(priors.prevalence_a > 0) ||
      !(priors.prevalence_b > 0))
    throw SpecError("priors: all scales and concentrations must be positive");
  if (ghk_nodes < 1) throw SpecError("model: GHK node count must be at least 1");
}

}  // namespace mvplc
