#include "mvplc/analysis.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>
#include <tuple>

#include "mvplc/math.hpp"
#include "mvplc/spec.hpp"

namespace mvplc {

namespace {

std::size_t threshold_index(const TestDefinition& test, std::optional<int> k) {
  if (!test.is_ordinal()) {
    if (k) throw SpecError("test " + test.label + " is dichotomous and takes no threshold");
    return 0;
  }
  if (!k) throw SpecError("test " + test.label + " is ordinal and needs a threshold k");
  if (*k < 1 || *k > test.num_categories - 1)
    throw SpecError("threshold " + std::to_string(*k) + " out of range for test " + test.label);
  return static_cast<std::size_t>(*k - 1);
}

Accuracy accuracy_from(const TestDefinition& test, const ClassPair<double>& nu,
                       const ClassPair<std::vector<double>>* cut, std::optional<int> k) {
  const std::size_t i = threshold_index(test, k);
  if (!test.is_ordinal()) return {approx_cdf(nu[1]), approx_cdf(-nu[0])};
  return {approx_cdf(nu[1] - (*cut)[1].at(i)), approx_cdf((*cut)[0].at(i) - nu[0])};
}

double clamp_probability(double p) { return std::clamp(p, 1e-12, 1.0 - 1e-12); }

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

}  // namespace

Accuracy study_accuracy(const ParameterLayout& layout, const ParameterState<double>& state, std::size_t s,
                        std::size_t t, std::optional<int> k) {
  const auto& test = layout.spec().tests.at(t);
  if (s >= layout.num_studies()) throw SpecError("study index out of range");
  return accuracy_from(test, state.nu[s][t], test.is_ordinal() ? &state.cut[s][t] : nullptr, k);
}

Accuracy summary_accuracy(const ParameterLayout& layout, const ParameterState<double>& state, std::size_t t,
                          std::optional<int> k) {
  const auto& test = layout.spec().tests.at(t);
  if (!test.is_ordinal()) return accuracy_from(test, state.mu[t], nullptr, k);
  const ClassPair<std::vector<double>> cut = {summary_cutpoints(state.phi[t][0]), summary_cutpoints(state.phi[t][1])};
  return accuracy_from(test, state.mu[t], &cut, k);
}

PredictedStudy predict_new_study(const ParameterLayout& layout, const ParameterState<double>& state,
                                 CounterRng& rng) {
  const ModelSpec& spec = layout.spec();
  PredictedStudy out;
  out.nu.resize(spec.num_tests());
  out.cut.resize(spec.num_tests());
  for (std::size_t t = 0; t < spec.num_tests(); ++t) {
    if (layout.sampled_index[t] == ParameterLayout::npos) {
      out.nu[t] = state.mu[t];
    } else {
      const double z0 = rng.normal(), z1 = rng.normal();
      const double r = state.rho[t];
      out.nu[t][0] = state.mu[t][0] + state.sigma[t][0] * z0;
      out.nu[t][1] = state.mu[t][1] + state.sigma[t][1] * (r * z0 + std::sqrt(1.0 - r * r) * z1);
    }
    if (!spec.tests[t].is_ordinal()) continue;
    for (std::size_t d = 0; d < kClasses; ++d) {
      const auto& phi = state.phi[t][d];
      std::vector<double> alpha(phi.size());
      for (std::size_t k = 0; k < phi.size(); ++k) alpha[k] = state.kappa[t][d] * phi[k];
      out.cut[t][d] = probs_to_cutpoints(rng.dirichlet(alpha), 0.0);
    }
  }
  return out;
}

Accuracy predicted_accuracy(const ParameterLayout& layout, const PredictedStudy& study, std::size_t t,
                            std::optional<int> k) {
  const auto& test = layout.spec().tests.at(t);
  return accuracy_from(test, study.nu.at(t), test.is_ordinal() ? &study.cut[t] : nullptr, k);
}

Strategy parse_strategy(const std::string& s) {
  std::string u = s;
  for (auto& c : u) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (u == "BTN") return Strategy::btn;
  if (u == "BTP") return Strategy::btp;
  throw SpecError("joint strategy must be BTN or BTP, got '" + s + "'");
}

std::string to_string(Strategy s) { return s == Strategy::btn ? "BTN" : "BTP"; }

JointAccuracy joint_accuracy(const ParameterLayout& layout, const ParameterState<double>& state, std::size_t t,
                             std::size_t t2, std::optional<int> k, std::optional<int> k2, Strategy strategy) {
  if (t == t2) throw SpecError("joint accuracy needs two different tests");
  const Accuracy a = summary_accuracy(layout, state, t, k);
  const Accuracy b = summary_accuracy(layout, state, t2, k2);

  // Covariance of the two positive-result indicators within class d, whose
  // rates are m and m2.
  auto covariance = [&](std::size_t d, double m, double m2) {
    if (!layout.dependent()) return 0.0;
    const Matrix psi = correlation_from_cholesky(state.chol_g[d]);
    const double eps = psi(t, t2);
    if (eps == 0.0) return 0.0;
    const double tau = -std_normal_quantile(clamp_probability(m));
    const double tau2 = -std_normal_quantile(clamp_probability(m2));
    const double r = polychoric_to_product_moment(tau, tau2, eps);
    return r * std::sqrt(m * (1.0 - m) * m2 * (1.0 - m2));
  };

  JointAccuracy j;
  j.cov_diseased = covariance(1, a.se, b.se);
  j.cov_healthy = covariance(0, 1.0 - a.sp, 1.0 - b.sp);
  if (strategy == Strategy::btn) {
    j.se = a.se * b.se + j.cov_diseased;
    j.sp = 1.0 - ((1.0 - a.sp) * (1.0 - b.sp) + j.cov_healthy);
  } else {
    j.se = 1.0 - ((1.0 - a.se) * (1.0 - b.se) + j.cov_diseased);
    j.sp = a.sp * b.sp + j.cov_healthy;
  }
  j.clamped = j.se < 0.0 || j.se > 1.0 || j.sp < 0.0 || j.sp > 1.0;
  j.se = std::clamp(j.se, 0.0, 1.0);
  j.sp = std::clamp(j.sp, 0.0, 1.0);
  return j;
}

JointRequest parse_joint(std::span<const TestDefinition> tests, const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(item);
  if (!text.empty() && text.back() == ',') parts.emplace_back();
  if (parts.size() != 5) throw SpecError("--joint expects t,t',k,k',BTN|BTP; got '" + text + "'");
  JointRequest r;
  r.t = find_test(tests, parts[0]);
  r.t2 = find_test(tests, parts[1]);
  auto threshold = [&](const std::string& s, std::size_t t) -> std::optional<int> {
    if (!tests[t].is_ordinal()) {
      if (!s.empty() && s != "0" && s != "-")
        throw SpecError("test " + tests[t].label + " is dichotomous; use 0 or leave its threshold empty");
      return std::nullopt;
    }
    try {
      return std::stoi(s);
    } catch (const std::exception&) {
      throw SpecError("threshold for ordinal test " + tests[t].label + " must be an integer");
    }
  };
  r.k = threshold(parts[2], r.t);
  r.k2 = threshold(parts[3], r.t2);
  r.strategy = parse_strategy(parts[4]);
  if (r.t == r.t2) throw SpecError("joint accuracy needs two different tests");
  threshold_index(tests[r.t], r.k);
  threshold_index(tests[r.t2], r.k2);
  return r;
}

std::string Estimand::name() const {
  std::string tag;
  switch (scope) {
    case Scope::summary: tag = "G"; break;
    case Scope::prediction: tag = "pred"; break;
    case Scope::study: tag = "S" + std::to_string(study + 1); break;
  }
  std::string out = measure + "_" + tag + "[" + test;
  if (!cutpoint.empty()) out += "," + cutpoint;
  if (!strategy.empty()) out += "," + strategy;
  return out + "]";
}

namespace {

std::vector<std::optional<int>> thresholds_of(const TestDefinition& test) {
  if (!test.is_ordinal()) return {std::nullopt};
  std::vector<std::optional<int>> out;
  for (int k = 1; k < test.num_categories; ++k) out.emplace_back(k);
  return out;
}

std::string cut_label(std::optional<int> k) { return k ? std::to_string(*k) : std::string(); }

}  // namespace

EstimandTable compute_estimands(const ParameterLayout& layout, std::span<const ParameterState<double>> states,
                                const EstimandRequest& request) {
  const ModelSpec& spec = layout.spec();
  std::vector<std::size_t> tests = request.tests;
  if (tests.empty())
    for (std::size_t t = 0; t < spec.num_tests(); ++t) tests.push_back(t);

  EstimandTable table;
  // Each row: estimand plus how to evaluate it.
  struct Row {
    Scope scope;
    std::size_t study, test;
    std::optional<int> k;
    bool se;
    int joint = -1;
  };
  std::vector<Row> rows;
  auto add = [&](Row r, Estimand e) {
    rows.push_back(r);
    table.estimands.push_back(std::move(e));
  };
  auto add_pair = [&](Scope scope, std::size_t s, std::size_t t, std::optional<int> k) {
    for (bool se : {true, false}) {
      Estimand e;
      e.measure = se ? "Se" : "Sp";
      e.scope = scope;
      e.study = s;
      e.test = spec.tests[t].label;
      e.cutpoint = cut_label(k);
      add({scope, s, t, k, se}, e);
    }
  };
  for (std::size_t t : tests)
    for (auto k : thresholds_of(spec.tests.at(t))) {
      add_pair(Scope::summary, 0, t, k);
      if (request.prediction) add_pair(Scope::prediction, 0, t, k);
      if (request.studies)
        for (std::size_t s = 0; s < layout.num_studies(); ++s) add_pair(Scope::study, s, t, k);
    }
  for (std::size_t j = 0; j < request.joint.size(); ++j) {
    const JointRequest& q = request.joint[j];
    for (bool se : {true, false}) {
      Estimand e;
      e.measure = se ? "Se" : "Sp";
      e.scope = Scope::summary;
      e.test = spec.tests.at(q.t).label + "&" + spec.tests.at(q.t2).label;
      e.cutpoint = (q.k ? std::to_string(*q.k) : "-") + ";" + (q.k2 ? std::to_string(*q.k2) : "-");
      e.strategy = to_string(q.strategy);
      add({Scope::summary, 0, q.t, q.k, se, static_cast<int>(j)}, e);
    }
  }

  table.values.assign(rows.size(), std::vector<double>(states.size()));
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto& st = states[i];
    CounterRng rng(request.seed, i);
    std::optional<PredictedStudy> predicted;
    if (request.prediction) predicted = predict_new_study(layout, st, rng);
    std::vector<JointAccuracy> joint;
    for (const auto& q : request.joint) {
      joint.push_back(joint_accuracy(layout, st, q.t, q.t2, q.k, q.k2, q.strategy));
      ++table.joint_evaluations;
      table.joint_clamped += joint.back().clamped ? 1 : 0;
    }
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const Row& row = rows[r];
      double v = 0.0;
      if (row.joint >= 0) {
        const JointAccuracy& ja = joint[static_cast<std::size_t>(row.joint)];
        v = row.se ? ja.se : ja.sp;
      } else {
        Accuracy a;
        switch (row.scope) {
          case Scope::summary: a = summary_accuracy(layout, st, row.test, row.k); break;
          case Scope::prediction: a = predicted_accuracy(layout, *predicted, row.test, row.k); break;
          case Scope::study: a = study_accuracy(layout, st, row.study, row.test, row.k); break;
        }
        v = row.se ? a.se : a.sp;
      }
      table.values[r][i] = v;
    }
  }
  return table;
}

std::vector<ParameterState<double>> draw_states(const ParameterLayout& layout, const PosteriorDraws& draws) {
  std::vector<ParameterState<double>> out;
  out.reserve(draws.total_draws());
  for (const auto& ch : draws.chains) {
    if (ch.points.size() != ch.telemetry.size()) throw SamplerError("draws: unconstrained points are missing");
    for (const auto& q : ch.points) {
      if (q.size() != layout.size()) throw SamplerError("draws: point dimension does not match the model");
      out.push_back(constrain<double>(layout, q));
    }
  }
  return out;
}

AccuracySummary summarize_values(const Estimand& e, std::span<const double> values) {
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  return {e, quantile_sorted(v, 0.5), quantile_sorted(v, 0.025), quantile_sorted(v, 0.975)};
}

std::vector<AccuracySummary> summarize(const EstimandTable& table) {
  std::vector<AccuracySummary> out;
  for (std::size_t i = 0; i < table.estimands.size(); ++i)
    out.push_back(summarize_values(table.estimands[i], table.values[i]));
  return out;
}

namespace {
const char* scope_name(Scope s) {
  switch (s) {
    case Scope::summary: return "summary";
    case Scope::prediction: return "prediction";
    case Scope::study: return "study";
  }
  return "";
}
}  // namespace

void write_summary_csv(std::ostream& out, std::span<const AccuracySummary> rows) {
  out << "estimand,measure,scope,study,test,cutpoint,strategy,median,lower,upper\n";
  for (const auto& r : rows) {
    const Estimand& e = r.estimand;
    out << '"' << e.name() << "\"," << e.measure << ',' << scope_name(e.scope) << ','
        << (e.scope == Scope::study ? std::to_string(e.study + 1) : "") << ',' << e.test << ',' << e.cutpoint << ','
        << e.strategy << ',' << format_double(r.median) << ',' << format_double(r.lower) << ','
        << format_double(r.upper) << '\n';
  }
}

// ---- sROC ---------------------------------------------------------------------

bool Ellipse::contains(double fpr, double se) const {
  const double x = logit(clamp_probability(fpr)) - center_x;
  const double y = logit(clamp_probability(se)) - center_y;
  const double det = sxx * syy - sxy * sxy;
  const double m2 = (syy * x * x - 2.0 * sxy * x * y + sxx * y * y) / det;
  return m2 <= radius2;
}

std::vector<std::pair<double, double>> Ellipse::outline(std::size_t points) const {
  const double l11 = std::sqrt(sxx);
  const double l21 = sxy / l11;
  const double l22 = std::sqrt(std::max(0.0, syy - l21 * l21));
  const double r = std::sqrt(radius2);
  std::vector<std::pair<double, double>> out;
  for (std::size_t i = 0; i <= points; ++i) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(points);
    const double u = r * std::cos(a), v = r * std::sin(a);
    out.emplace_back(inv_logit(center_x + l11 * u), inv_logit(center_y + l21 * u + l22 * v));
  }
  out.back() = out.front();
  return out;
}

Ellipse fit_ellipse(std::span<const double> fpr, std::span<const double> se, double level) {
  if (fpr.size() != se.size() || fpr.size() < 3) throw SpecError("ellipse: need at least 3 paired points");
  if (!(level > 0.0 && level < 1.0)) throw SpecError("ellipse: level must lie in (0, 1)");
  const std::size_t n = fpr.size();
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = logit(clamp_probability(fpr[i]));
    y[i] = logit(clamp_probability(se[i]));
  }
  Ellipse e;
  for (std::size_t i = 0; i < n; ++i) {
    e.center_x += x[i];
    e.center_y += y[i];
  }
  e.center_x /= static_cast<double>(n);
  e.center_y /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - e.center_x, dy = y[i] - e.center_y;
    e.sxx += dx * dx;
    e.sxy += dx * dy;
    e.syy += dy * dy;
  }
  const double dn = static_cast<double>(n - 1);
  // A tiny ridge keeps degenerate clouds (pinned tests) invertible.
  e.sxx = e.sxx / dn + 1e-12;
  e.syy = e.syy / dn + 1e-12;
  e.sxy /= dn;
  e.radius2 = -2.0 * std::log(1.0 - level);
  return e;
}

std::vector<SrocEntry> sroc_data(const EstimandTable& table) {
  using Key = std::tuple<std::string, std::string, std::string>;  // test, cutpoint, strategy
  std::map<Key, std::array<int, 4>> index;                        // Se_G, Sp_G, Se_pred, Sp_pred
  std::vector<Key> order;
  for (std::size_t i = 0; i < table.estimands.size(); ++i) {
    const Estimand& e = table.estimands[i];
    if (e.scope == Scope::study) continue;
    const Key key{e.test, e.cutpoint, e.strategy};
    auto [it, fresh] = index.try_emplace(key, std::array<int, 4>{-1, -1, -1, -1});
    if (fresh) order.push_back(key);
    const int slot = (e.scope == Scope::prediction ? 2 : 0) + (e.measure == "Se" ? 0 : 1);
    it->second[static_cast<std::size_t>(slot)] = static_cast<int>(i);
  }
  std::vector<SrocEntry> out;
  for (const Key& key : order) {
    const auto& ix = index.at(key);
    if (ix[0] < 0 || ix[1] < 0) continue;
    SrocEntry entry;
    entry.test = std::get<0>(key);
    entry.cutpoint = std::get<1>(key);
    if (!std::get<2>(key).empty()) entry.cutpoint += (entry.cutpoint.empty() ? "" : ",") + std::get<2>(key);
    entry.se = table.values[static_cast<std::size_t>(ix[0])];
    for (double sp : table.values[static_cast<std::size_t>(ix[1])]) entry.fpr.push_back(1.0 - sp);
    entry.posterior = fit_ellipse(entry.fpr, entry.se);
    if (ix[2] >= 0 && ix[3] >= 0) {
      entry.pred_se = table.values[static_cast<std::size_t>(ix[2])];
      for (double sp : table.values[static_cast<std::size_t>(ix[3])]) entry.pred_fpr.push_back(1.0 - sp);
      entry.prediction = fit_ellipse(entry.pred_fpr, entry.pred_se);
    }
    out.push_back(std::move(entry));
  }
  return out;
}

void write_sroc_points_csv(std::ostream& out, std::span<const SrocEntry> entries) {
  out << "test,cutpoint,kind,draw,fpr,se\n";
  for (const auto& e : entries) {
    for (std::size_t i = 0; i < e.se.size(); ++i)
      out << e.test << ",\"" << e.cutpoint << "\",summary," << i + 1 << ',' << format_double(e.fpr[i]) << ','
          << format_double(e.se[i]) << '\n';
    for (std::size_t i = 0; i < e.pred_se.size(); ++i)
      out << e.test << ",\"" << e.cutpoint << "\",prediction," << i + 1 << ',' << format_double(e.pred_fpr[i]) << ','
          << format_double(e.pred_se[i]) << '\n';
  }
}

void write_sroc_ellipses_csv(std::ostream& out, std::span<const SrocEntry> entries) {
  out << "test,cutpoint,kind,center_fpr,center_se,center_logit_fpr,center_logit_se,var_x,cov_xy,var_y,radius2,"
         "vertex,fpr,se\n";
  for (const auto& e : entries) {
    auto emit = [&](const char* kind, const Ellipse& el) {
      const auto poly = el.outline(72);
      for (std::size_t v = 0; v < poly.size(); ++v)
        out << e.test << ",\"" << e.cutpoint << "\"," << kind << ',' << format_double(inv_logit(el.center_x)) << ','
            << format_double(inv_logit(el.center_y)) << ',' << format_double(el.center_x) << ','
            << format_double(el.center_y) << ',' << format_double(el.sxx) << ',' << format_double(el.sxy) << ','
            << format_double(el.syy) << ',' << format_double(el.radius2) << ',' << v + 1 << ','
            << format_double(poly[v].first) << ',' << format_double(poly[v].second) << '\n';
    };
    emit("summary", e.posterior);
    if (!e.pred_se.empty()) emit("prediction", e.prediction);
  }
}

}  // namespace mvplc
