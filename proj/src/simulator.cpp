#include "mvplc/simulator.hpp"

#include <cmath>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "json.hpp"
#include "mvplc/ghk.hpp"
#include "mvplc/model.hpp"
#include "mvplc/prior.hpp"

namespace mvplc {

using nlohmann::json;

void draw_study_effects(const ParameterLayout& layout, TrueParameters& truth, CounterRng& rng) {
  const ModelSpec& spec = layout.spec();
  const std::size_t t_count = spec.num_tests();
  const std::size_t s_count = layout.num_studies();
  truth.nu_raw.assign(s_count, std::vector<ClassPair<double>>(t_count, {0.0, 0.0}));
  truth.nu.assign(s_count, std::vector<ClassPair<double>>(t_count));
  for (std::size_t s = 0; s < s_count; ++s)
    for (std::size_t t = 0; t < t_count; ++t) {
      if (layout.sampled_index[t] == ParameterLayout::npos) {
        truth.nu[s][t] = truth.mu[t];
        continue;
      }
      const double z0 = rng.normal(), z1 = rng.normal();
      const double r = truth.rho[t];
      truth.nu_raw[s][t] = {z0, z1};
      truth.nu[s][t][0] = truth.mu[t][0] + truth.sigma[t][0] * z0;
      truth.nu[s][t][1] = truth.mu[t][1] + truth.sigma[t][1] * (r * z0 + std::sqrt(1.0 - r * r) * z1);
    }
  if (layout.dependent()) {
    truth.chol_delta.assign(s_count, {});
    for (std::size_t s = 0; s < s_count; ++s)
      for (std::size_t d = 0; d < kClasses; ++d) truth.chol_delta[s][d] = sample_mask_cholesky(layout, rng);
  }
  truth.cut.assign(s_count, std::vector<ClassPair<std::vector<double>>>(t_count));
  for (std::size_t t : layout.ordinal_tests) {
    const std::size_t k_count = static_cast<std::size_t>(spec.tests[t].num_categories);
    for (std::size_t s = 0; s < s_count; ++s)
      for (std::size_t d = 0; d < kClasses; ++d) {
        std::vector<double> alpha(k_count);
        for (std::size_t k = 0; k < k_count; ++k) alpha[k] = truth.kappa[t][d] * truth.phi[t][d][k];
        truth.cut[s][t][d] = probs_to_cutpoints(rng.dirichlet(alpha), 0.0);
      }
  }
}

MetaDataset simulate_dataset(const ParameterLayout& layout, const TrueParameters& truth,
                             std::span<const std::size_t> individuals_per_study, std::uint64_t seed) {
  const ModelSpec& spec = layout.spec();
  const std::size_t t_count = spec.num_tests();
  if (individuals_per_study.size() != layout.num_studies())
    throw SpecError("simulate: need one sample size per study");
  std::vector<StudyData> studies;
  for (std::size_t s = 0; s < layout.num_studies(); ++s) {
    const double p = truth.prevalence[s];
    if (!(p >= 0.0 && p <= 1.0)) throw SpecError("simulate: prevalence outside [0,1]");
    const ClassPair<Matrix> chol = {study_cholesky(layout, truth, s, 0), study_cholesky(layout, truth, s, 1)};
    StudyData sd{"S" + std::to_string(s + 1), {}};
    sd.individuals.reserve(individuals_per_study[s]);
    std::vector<double> e(t_count);
    for (std::size_t n = 0; n < individuals_per_study[s]; ++n) {
      CounterRng rng(seed, (static_cast<std::uint64_t>(s) << 32) | n);
      const std::size_t d = rng.uniform() < p ? 1 : 0;
      Pattern y(t_count);
      for (std::size_t t = 0; t < t_count; ++t) {
        e[t] = approx_quantile(rng.uniform());
        double z = truth.nu[s][t][d];
        for (std::size_t j = 0; j <= t; ++j) z += chol[d](t, j) * e[j];
        if (spec.tests[t].is_ordinal()) {
          int k = 0;
          for (double c : truth.cut[s][t][d]) k += z > c ? 1 : 0;
          y[t] = k;
        } else {
          y[t] = z > 0.0 ? 1 : 0;
        }
      }
      sd.individuals.push_back(std::move(y));
    }
    studies.push_back(std::move(sd));
  }
  return MetaDataset(spec.tests, std::move(studies));
}

std::vector<Pattern> all_patterns(std::span<const TestDefinition> tests) {
  std::vector<Pattern> out;
  Pattern y(tests.size(), 0);
  while (true) {
    out.push_back(y);
    std::size_t t = tests.size();
    while (t-- > 0) {
      if (++y[t] < tests[t].num_categories) break;
      y[t] = 0;
    }
    if (t == static_cast<std::size_t>(-1)) break;
  }
  return out;
}

namespace {

bool diagonal(const Matrix& l) {
  for (std::size_t i = 0; i < l.dim(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (l(i, j) != 0.0) return false;
  return true;
}

// P(lower <= L e <= upper) for two tests: integrate over u = link(e_1).
double two_dim_probability(const BoxBounds& box, const Matrix& l) {
  const double ua = box.lower[0] == -kInf ? 0.0 : approx_cdf(box.lower[0]);
  const double ub = box.upper[0] == kInf ? 1.0 : approx_cdf(box.upper[0]);
  if (!(ub > ua)) return 0.0;
  auto f = [&](double u) {
    const double e = approx_quantile(u);
    const double hi = box.upper[1] == kInf ? 1.0 : approx_cdf((box.upper[1] - l(1, 0) * e) / l(1, 1));
    const double lo = box.lower[1] == -kInf ? 0.0 : approx_cdf((box.lower[1] - l(1, 0) * e) / l(1, 1));
    return hi - lo;
  };
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, ua, ub, 15, 1e-13);
}

}  // namespace

std::vector<PatternProbability> enumerate_pattern_probs(const ParameterLayout& layout, const TrueParameters& truth,
                                                        std::size_t s) {
  const auto& tests = layout.spec().tests;
  if (tests.size() > 4) throw SpecError("pattern enumeration supports at most 4 tests");
  if (s >= layout.num_studies()) throw SpecError("pattern enumeration: study out of range");
  const ClassPair<Matrix> chol = {study_cholesky(layout, truth, s, 0), study_cholesky(layout, truth, s, 1)};
  const GhkNodes big(tests.size() > 1 ? tests.size() - 1 : 0, 65536, 0x0ac1e5);
  const double p = truth.prevalence[s];
  std::vector<PatternProbability> out;
  for (const Pattern& y : all_patterns(tests)) {
    double prob[kClasses];
    for (std::size_t d = 0; d < kClasses; ++d) {
      const BoxBounds box = box_bounds(y, tests, truth, s, d);
      if (diagonal(chol[d]) || tests.size() == 1)
        prob[d] = box_probability(box, chol[d], big).probability;
      else if (tests.size() == 2)
        prob[d] = two_dim_probability(box, chol[d]);
      else
        prob[d] = box_probability(box, chol[d], big).probability;
    }
    out.push_back({y, p * prob[1] + (1.0 - p) * prob[0]});
  }
  return out;
}

namespace {

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.dim(); ++i) {
    json r = json::array();
    for (std::size_t j = 0; j < m.dim(); ++j) r.push_back(m(i, j));
    rows.push_back(r);
  }
  return rows;
}

Matrix cholesky_from_json(const json& j, std::size_t n) {
  Matrix m(n);
  if (!j.is_array() || j.size() != n) throw SpecError("truth: correlation matrix has the wrong size");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) m(i, k) = j.at(i).at(k).get<double>();
  return cholesky(CorrelationMatrix(m));
}

}  // namespace

std::string truth_to_json(const ParameterLayout& layout, const TrueParameters& truth) {
  const auto& spec = layout.spec();
  const std::size_t t_count = spec.num_tests();
  json j;
  j["mu"] = truth.mu;
  j["sigma"] = truth.sigma;
  j["rho"] = truth.rho;
  j["prevalence"] = truth.prevalence;
  j["nu"] = truth.nu;
  if (layout.dependent()) {
    j["Psi_G"] = {matrix_json(correlation_from_cholesky(truth.chol_g[0])),
                  matrix_json(correlation_from_cholesky(truth.chol_g[1]))};
    j["beta"] = truth.beta;
    json delta = json::array();
    for (const auto& pr : truth.chol_delta)
      delta.push_back({matrix_json(correlation_from_cholesky(pr[0])), matrix_json(correlation_from_cholesky(pr[1]))});
    j["Psi_Delta"] = delta;
  }
  if (!layout.ordinal_tests.empty()) {
    json kappa = json::array(), phi = json::array(), cut = json::array();
    for (std::size_t t = 0; t < t_count; ++t) {
      kappa.push_back(spec.tests[t].is_ordinal() ? json(truth.kappa[t]) : json(nullptr));
      phi.push_back(spec.tests[t].is_ordinal() ? json(truth.phi[t]) : json(nullptr));
    }
    for (const auto& row : truth.cut) {
      json r = json::array();
      for (std::size_t t = 0; t < t_count; ++t) r.push_back(spec.tests[t].is_ordinal() ? json(row[t]) : json(nullptr));
      cut.push_back(r);
    }
    j["kappa"] = kappa;
    j["phi"] = phi;
    j["cutpoints"] = cut;
  }
  return j.dump(2);
}

bool truth_from_json(const ParameterLayout& layout, const std::string& json_text, TrueParameters& truth) {
  const auto& spec = layout.spec();
  const std::size_t t_count = spec.num_tests();
  const std::size_t s_count = layout.num_studies();
  const json j = json::parse(json_text);
  static const char* known[] = {"mu", "sigma", "rho", "prevalence", "nu", "Psi_G", "beta", "Psi_Delta",
                                "kappa", "phi", "cutpoints"};
  for (const auto& [key, _] : j.items())
    if (std::find(std::begin(known), std::end(known), key) == std::end(known))
      throw SpecError("truth: unknown key '" + key + "'");
  truth = TrueParameters{};
  truth.log_jacobian = 0.0;
  truth.mu = j.at("mu").get<std::vector<ClassPair<double>>>();
  truth.sigma = j.at("sigma").get<std::vector<ClassPair<double>>>();
  truth.rho = j.at("rho").get<std::vector<double>>();
  truth.prevalence = j.at("prevalence").get<std::vector<double>>();
  if (truth.mu.size() != t_count || truth.sigma.size() != t_count || truth.rho.size() != t_count)
    throw SpecError("truth: mu, sigma and rho need one entry per test");
  if (truth.prevalence.size() != s_count) throw SpecError("truth: prevalence needs one entry per study");
  for (std::size_t t = 0; t < t_count; ++t)
    if (spec.perfect[t]) {
      truth.mu[t] = {-kPerfectMean, kPerfectMean};
      truth.sigma[t] = {0.0, 0.0};
      truth.rho[t] = 0.0;
    }
  truth.beta = {0.0, 0.0};
  if (layout.dependent()) {
    const json& g = j.at("Psi_G");
    for (std::size_t d = 0; d < kClasses; ++d) truth.chol_g[d] = cholesky_from_json(g.at(d), t_count);
    truth.beta = j.at("beta").get<ClassPair<double>>();
  }
  truth.kappa.assign(t_count, {0.0, 0.0});
  truth.phi.assign(t_count, {});
  for (std::size_t t : layout.ordinal_tests) {
    truth.kappa[t] = j.at("kappa").at(t).get<ClassPair<double>>();
    truth.phi[t] = j.at("phi").at(t).get<ClassPair<std::vector<double>>>();
    for (std::size_t d = 0; d < kClasses; ++d)
      if (truth.phi[t][d].size() != static_cast<std::size_t>(spec.tests[t].num_categories))
        throw SpecError("truth: phi needs K entries per class");
  }

  bool complete = j.contains("nu") && (!layout.dependent() || j.contains("Psi_Delta")) &&
                  (layout.ordinal_tests.empty() || j.contains("cutpoints"));
  if (!complete) return false;
  truth.nu = j.at("nu").get<std::vector<std::vector<ClassPair<double>>>>();
  if (truth.nu.size() != s_count) throw SpecError("truth: nu needs one entry per study");
  truth.nu_raw.assign(s_count, std::vector<ClassPair<double>>(t_count, {0.0, 0.0}));
  if (layout.dependent()) {
    const json& dj = j.at("Psi_Delta");
    truth.chol_delta.assign(s_count, {});
    for (std::size_t s = 0; s < s_count; ++s)
      for (std::size_t d = 0; d < kClasses; ++d) truth.chol_delta[s][d] = cholesky_from_json(dj.at(s).at(d), t_count);
  }
  truth.cut.assign(s_count, std::vector<ClassPair<std::vector<double>>>(t_count));
  for (std::size_t s = 0; s < s_count; ++s)
    for (std::size_t t : layout.ordinal_tests) truth.cut[s][t] = j.at("cutpoints").at(s).at(t).get<ClassPair<std::vector<double>>>();
  // Recover the innovations so the state is also a valid sampler point.
  const std::vector<double> x = unconstrain(layout, truth);
  const TrueParameters back = constrain<double>(layout, x);
  truth.nu_raw = back.nu_raw;
  return true;
}

}  // namespace mvplc
