#include "mvplc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>

#include "mvplc/math.hpp"
#include "mvplc/rng.hpp"
#include "mvplc/simulator.hpp"

namespace mvplc {

std::vector<double> PointwiseLogLik::column(std::size_t j) const {
  std::vector<double> out(draws);
  for (std::size_t i = 0; i < draws; ++i) out[i] = values[i * points + j];
  return out;
}

PointwiseLogLik pointwise_loglik(const Model& model, std::span<const ParameterState<double>> states) {
  PointwiseLogLik out;
  out.draws = states.size();
  out.points = model.data().num_individuals();
  out.values.reserve(out.draws * out.points);
  for (const auto& st : states) {
    const std::vector<double> row = model.pointwise_loglik(st);
    for (double v : row)
      if (!std::isfinite(v)) throw EvaluationError("pointwise log-likelihood is not finite");
    out.values.insert(out.values.end(), row.begin(), row.end());
  }
  return out;
}

namespace {

double log_sum_exp_all(std::span<const double> x) {
  const double m = *std::max_element(x.begin(), x.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

double sample_variance(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

}  // namespace

ParetoFit fit_generalized_pareto(std::span<const double> xs, bool shrink) {
  std::vector<double> x(xs.begin(), xs.end());
  std::sort(x.begin(), x.end());
  const std::size_t n = x.size();
  if (n < 2) throw EvaluationError("Pareto fit needs at least two exceedances");
  const double prior = 3.0;
  const std::size_t m = 30 + static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n))));
  const std::size_t q1 = static_cast<std::size_t>(std::floor(static_cast<double>(n) / 4.0 + 0.5));
  const double xstar = x[std::max<std::size_t>(q1, 1) - 1];
  std::vector<double> theta(m), ltheta(m);
  for (std::size_t j = 0; j < m; ++j) {
    theta[j] = 1.0 / x[n - 1] + (1.0 - std::sqrt(static_cast<double>(m) / (static_cast<double>(j) + 0.5))) / prior / xstar;
    // Profile log-likelihood of theta.
    const double a = -theta[j];
    double k = 0.0;
    for (double v : x) k += std::log1p(a * v);
    k /= static_cast<double>(n);
    ltheta[j] = static_cast<double>(n) * (std::log(a / k) - k - 1.0);
  }
  const double lse = log_sum_exp_all(ltheta);
  double theta_hat = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const double w = std::exp(ltheta[j] - lse);
    if (std::isfinite(w)) theta_hat += theta[j] * w;
  }
  double k = 0.0;
  for (double v : x) k += std::log1p(-theta_hat * v);
  k /= static_cast<double>(n);
  ParetoFit fit;
  fit.sigma = -k / theta_hat;
  if (shrink) {
    const double nd = static_cast<double>(n), a = 10.0;
    k = k * nd / (nd + a) + a * 0.5 / (nd + a);
  }
  fit.k = std::isnan(k) ? std::numeric_limits<double>::infinity() : k;
  return fit;
}

PsisResult psis_smooth(std::span<const double> log_ratios) {
  const std::size_t s = log_ratios.size();
  if (s < 2) throw EvaluationError("PSIS needs at least two draws");
  const double mx = *std::max_element(log_ratios.begin(), log_ratios.end());
  PsisResult r;
  r.log_weights.resize(s);
  for (std::size_t i = 0; i < s; ++i) r.log_weights[i] = log_ratios[i] - mx;
  r.pareto_k = std::numeric_limits<double>::infinity();

  const double sd = static_cast<double>(s);
  const auto tail_len = static_cast<std::size_t>(std::ceil(std::min(0.2 * sd, 3.0 * std::sqrt(sd))));
  if (tail_len >= 5 && tail_len < s) {
    std::vector<std::size_t> order(s);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return r.log_weights[a] < r.log_weights[b]; });
    const std::size_t first = s - tail_len;
    const double tail_min = r.log_weights[order[first]], tail_max = r.log_weights[order[s - 1]];
    if (std::fabs(tail_max - tail_min) >= std::numeric_limits<double>::epsilon() / 100.0) {
      const double cutoff = r.log_weights[order[first - 1]];
      const double exp_cutoff = std::exp(cutoff);
      std::vector<double> exceed(tail_len);
      for (std::size_t i = 0; i < tail_len; ++i) exceed[i] = std::exp(r.log_weights[order[first + i]]) - exp_cutoff;
      const ParetoFit fit = fit_generalized_pareto(exceed);
      r.pareto_k = fit.k;
      if (std::isfinite(fit.k)) {
        for (std::size_t i = 0; i < tail_len; ++i) {
          const double p = (static_cast<double>(i) + 0.5) / static_cast<double>(tail_len);
          const double q = fit.sigma * std::expm1(-fit.k * std::log1p(-p)) / fit.k + exp_cutoff;
          r.log_weights[order[first + i]] = std::log(q);
        }
      }
    }
  }
  // Truncate at the largest raw weight, then undo the shift.
  for (double& w : r.log_weights) w = std::min(w, 0.0) + mx;
  return r;
}

LooResult psis_loo(const PointwiseLogLik& pll) {
  if (pll.draws < 100) throw EvaluationError("PSIS-LOO needs at least 100 draws");
  if (pll.points == 0) throw EvaluationError("PSIS-LOO needs at least one point");
  LooResult out;
  out.pointwise.resize(pll.points);
  out.pareto_k.resize(pll.points);
  const double log_s = std::log(static_cast<double>(pll.draws));
  double lpd = 0.0, mcse2 = 0.0;
  std::vector<double> ll, ratios(pll.draws), tmp(pll.draws);
  for (std::size_t j = 0; j < pll.points; ++j) {
    ll = pll.column(j);
    const auto [lo, hi] = std::minmax_element(ll.begin(), ll.end());
    if (*lo == *hi) {
      out.pointwise[j] = *lo;
      out.pareto_k[j] = 0.0;
      lpd += *lo;
      continue;
    }
    for (std::size_t i = 0; i < pll.draws; ++i) ratios[i] = -ll[i];
    const PsisResult ps = psis_smooth(ratios);
    const double norm = log_sum_exp_all(ps.log_weights);
    for (std::size_t i = 0; i < pll.draws; ++i) tmp[i] = ps.log_weights[i] - norm + ll[i];
    const double elpd = log_sum_exp_all(tmp);
    out.pointwise[j] = elpd;
    out.pareto_k[j] = ps.pareto_k;
    lpd += log_sum_exp_all(ll) - log_s;
    // Delta-method Monte Carlo error of log E_w[p(y|theta)].
    double var = 0.0;
    for (std::size_t i = 0; i < pll.draws; ++i) {
      const double w = std::exp(ps.log_weights[i] - norm);
      const double d = std::expm1(ll[i] - elpd);
      var += w * w * d * d;
    }
    mcse2 += var;
    if (ps.pareto_k > 0.7) ++out.high_k;
  }
  out.elpd = pairwise_sum(out.pointwise);
  out.se = std::sqrt(static_cast<double>(pll.points) * sample_variance(out.pointwise));
  out.looic = -2.0 * out.elpd;
  out.looic_se = 2.0 * out.se;
  out.p_loo = lpd - out.elpd;
  out.mcse = std::sqrt(mcse2);
  return out;
}

LooComparison compare(const LooResult& a, const LooResult& b) {
  if (a.size() != b.size()) throw EvaluationError("compare: results cover different numbers of points");
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = a.pointwise[i] - b.pointwise[i];
  return {pairwise_sum(diff), std::sqrt(static_cast<double>(diff.size()) * sample_variance(diff))};
}

void write_loo_table(std::ostream& out, std::vector<NamedLoo> models) {
  std::stable_sort(models.begin(), models.end(), [](const NamedLoo& x, const NamedLoo& y) { return x.loo.elpd > y.loo.elpd; });
  out << "model,looic,looic_se,elpd,elpd_se,elpd_diff,se_diff,p_loo,high_pareto_k\n";
  out << std::fixed << std::setprecision(1);
  for (const auto& m : models) {
    const LooComparison c = compare(m.loo, models.front().loo);
    out << m.model << ',' << m.loo.looic << ',' << m.loo.looic_se << ',' << m.loo.elpd << ',' << m.loo.se << ','
        << c.elpd_diff << ',' << c.se_diff << ',' << m.loo.p_loo << ',' << m.loo.high_k << '\n';
  }
  out.unsetf(std::ios::floatfield);
}

// ---- posterior predictive checks ------------------------------------------------

std::vector<std::size_t> subsample_indices(std::size_t total, std::size_t count) {
  std::vector<std::size_t> out;
  if (total == 0) return out;
  if (count >= total) {
    out.resize(total);
    std::iota(out.begin(), out.end(), 0);
    return out;
  }
  for (std::size_t r = 0; r < count; ++r)
    out.push_back(static_cast<std::size_t>(std::floor((static_cast<double>(r) + 0.5) * static_cast<double>(total) /
                                                      static_cast<double>(count))));
  return out;
}

double pearson(std::span<const int> a, std::span<const int> b) {
  const std::size_t n = a.size();
  if (n != b.size() || n < 2) return std::numeric_limits<double>::quiet_NaN();
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sab / std::sqrt(saa * sbb);
}

namespace {

std::vector<std::size_t> study_sizes(const MetaDataset& data) {
  std::vector<std::size_t> n;
  for (const auto& s : data.studies()) n.push_back(s.individuals.size());
  return n;
}

std::vector<int> test_column(const StudyData& s, std::size_t t) {
  std::vector<int> out;
  out.reserve(s.individuals.size());
  for (const auto& y : s.individuals) out.push_back(y[t]);
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> test_pairs(std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) out.emplace_back(a, b);
  return out;
}

// Replicated datasets for an evenly spaced subsample of the states.
template <class Visit>
void for_each_replicate(const ParameterLayout& layout, const MetaDataset& data,
                        std::span<const ParameterState<double>> states, std::size_t replicates, std::uint64_t seed,
                        Visit&& visit) {
  if (states.empty()) throw EvaluationError("posterior predictive check needs at least one draw");
  if (replicates == 0) throw EvaluationError("posterior predictive check needs at least one replicate");
  const std::vector<std::size_t> sizes = study_sizes(data);
  for (std::size_t r = 0; r < replicates; ++r) {
    // With fewer states than replicates, states are reused in turn.
    const std::size_t idx = states.size() >= replicates ? subsample_indices(states.size(), replicates)[r]
                                                        : r % states.size();
    CounterRng rng(seed, r);
    visit(r, simulate_dataset(layout, states[idx], sizes, rng()));
  }
}

}  // namespace

std::vector<CorrelationResidual> ppc_correlation_residuals(const ParameterLayout& layout, const MetaDataset& data,
                                                           std::span<const ParameterState<double>> states,
                                                           std::size_t replicates, std::uint64_t seed) {
  const auto pairs = test_pairs(data.num_tests());
  const std::size_t s_count = data.num_studies();
  std::vector<CorrelationResidual> rows;
  for (std::size_t s = 0; s < s_count; ++s)
    for (const auto& [a, b] : pairs) {
      CorrelationResidual row;
      row.study = s;
      row.test_a = a;
      row.test_b = b;
      row.observed = pearson(test_column(data.studies()[s], a), test_column(data.studies()[s], b));
      rows.push_back(row);
    }
  std::vector<std::vector<double>> resid(rows.size());
  for_each_replicate(layout, data, states, replicates, seed, [&](std::size_t, const MetaDataset& rep) {
    std::size_t i = 0;
    for (std::size_t s = 0; s < s_count; ++s) {
      const StudyData& sd = rep.studies()[s];
      std::vector<std::vector<int>> cols;
      for (std::size_t t = 0; t < data.num_tests(); ++t) cols.push_back(test_column(sd, t));
      for (const auto& [a, b] : pairs) {
        const double r = pearson(cols[a], cols[b]);
        if (std::isfinite(r) && std::isfinite(rows[i].observed)) resid[i].push_back(rows[i].observed - r);
        ++i;
      }
    }
  });
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto& v = resid[i];
    rows[i].replicates = v.size();
    if (v.empty()) {
      rows[i].median = rows[i].lower = rows[i].upper = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    std::sort(v.begin(), v.end());
    rows[i].median = quantile_sorted(v, 0.5);
    rows[i].lower = quantile_sorted(v, 0.025);
    rows[i].upper = quantile_sorted(v, 0.975);
    rows[i].covers_zero = rows[i].lower <= 0.0 && 0.0 <= rows[i].upper;
  }
  return rows;
}

std::vector<CountResidual> ppc_count_residuals(const ParameterLayout& layout, const MetaDataset& data,
                                               std::span<const ParameterState<double>> states, std::size_t replicates,
                                               std::uint64_t seed) {
  const auto tests = data.tests();
  const std::vector<Pattern> patterns = all_patterns(tests);
  auto index_of = [&](const Pattern& y) {
    std::size_t idx = 0;
    for (std::size_t t = 0; t < y.size(); ++t) idx = idx * static_cast<std::size_t>(tests[t].num_categories) + y[t];
    return idx;
  };
  const std::size_t s_count = data.num_studies(), p_count = patterns.size();
  std::vector<CountResidual> rows(s_count * p_count);
  for (std::size_t s = 0; s < s_count; ++s) {
    for (std::size_t p = 0; p < p_count; ++p) {
      rows[s * p_count + p].study = s;
      rows[s * p_count + p].pattern = patterns[p];
    }
    for (const auto& y : data.studies()[s].individuals) rows[s * p_count + index_of(y)].observed += 1.0;
  }
  std::vector<std::vector<double>> counts(rows.size(), std::vector<double>(replicates, 0.0));
  for_each_replicate(layout, data, states, replicates, seed, [&](std::size_t r, const MetaDataset& rep) {
    for (std::size_t s = 0; s < s_count; ++s)
      for (const auto& y : rep.studies()[s].individuals) counts[s * p_count + index_of(y)][r] += 1.0;
  });
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto& v = counts[i];
    std::sort(v.begin(), v.end());
    rows[i].median = quantile_sorted(v, 0.5);
    rows[i].lower = quantile_sorted(v, 0.025);
    rows[i].upper = quantile_sorted(v, 0.975);
    rows[i].covered = rows[i].lower <= rows[i].observed && rows[i].observed <= rows[i].upper;
  }
  return rows;
}

double coverage(std::span<const CorrelationResidual> rows) {
  std::size_t n = 0, hit = 0;
  for (const auto& r : rows) {
    if (r.replicates == 0) continue;
    ++n;
    hit += r.covers_zero ? 1 : 0;
  }
  return n ? static_cast<double>(hit) / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

double coverage(std::span<const CountResidual> rows) {
  if (rows.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t hit = 0;
  for (const auto& r : rows) hit += r.covered ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(rows.size());
}

void write_correlation_residuals_csv(std::ostream& out, const MetaDataset& data,
                                     std::span<const CorrelationResidual> rows) {
  out << std::setprecision(10);
  out << "study,test_a,test_b,observed,residual_median,residual_lower,residual_upper,replicates,covers_zero\n";
  for (const auto& r : rows)
    out << data.studies()[r.study].study_id << ',' << data.tests()[r.test_a].label << ','
        << data.tests()[r.test_b].label << ',' << r.observed << ',' << r.median << ',' << r.lower << ',' << r.upper
        << ',' << r.replicates << ',' << (r.covers_zero ? 1 : 0) << '\n';
}

void write_count_residuals_csv(std::ostream& out, const MetaDataset& data, std::span<const CountResidual> rows) {
  out << std::setprecision(10);
  out << "study";
  for (const auto& t : data.tests()) out << ',' << t.label;
  out << ",observed,replicated_median,replicated_lower,replicated_upper,covered\n";
  for (const auto& r : rows) {
    out << data.studies()[r.study].study_id;
    for (std::size_t t = 0; t < r.pattern.size(); ++t) out << ',' << r.pattern[t] + data.tests()[t].file_offset();
    out << ',' << r.observed << ',' << r.median << ',' << r.lower << ',' << r.upper << ',' << (r.covered ? 1 : 0)
        << '\n';
  }
}

}  // namespace mvplc
