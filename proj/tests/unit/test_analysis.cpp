#include <algorithm>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "mvplc/analysis.hpp"

using namespace mvplc;
using namespace mvplc::testing;
using doctest::Approx;

namespace {

ParameterState<double> centre(const ParameterLayout& layout) {
  return constrain<double>(layout, std::vector<double>(layout.size(), 0.0));
}

}  // namespace

TEST_CASE("study accuracy at the threshold is one half") {
  const ModelSpec spec = case_spec(Dep::none);
  const ParameterLayout layout(spec, 2);
  auto st = centre(layout);
  st.nu[1][1][1] = 0.0;
  CHECK(study_accuracy(layout, st, 1, 1).se == 0.5);
  st.cut[1][2][1] = {-0.4, 0.9};
  st.nu[1][2][1] = 0.9;
  CHECK(study_accuracy(layout, st, 1, 2, 2).se == 0.5);
  CHECK(study_accuracy(layout, st, 1, 2, 1).se > 0.5);
  CHECK_THROWS(study_accuracy(layout, st, 1, 2));
  CHECK_THROWS(study_accuracy(layout, st, 1, 1, 1));
  CHECK_THROWS(study_accuracy(layout, st, 1, 2, 3));
}

TEST_CASE("summary accuracy") {
  const ModelSpec spec = case_spec(Dep::none, true);
  const ParameterLayout layout(spec, 2);
  auto st = centre(layout);
  // The perfect reference is pinned at -5 / +5.
  CHECK(summary_accuracy(layout, st, 0).se == Approx(approx_cdf(5.0)));
  CHECK(summary_accuracy(layout, st, 0).sp == Approx(approx_cdf(5.0)));
  CHECK(summary_accuracy(layout, st, 0).se > 0.9997);
  st.mu[1] = {0.0, 0.0};
  CHECK(summary_accuracy(layout, st, 1).se == 0.5);
  st.mu[2] = {0.0, 0.0};
  st.phi[2][1] = {0.5, 0.25, 0.25};  // first summary cutpoint at 0
  CHECK(summary_accuracy(layout, st, 2, 1).se == Approx(0.5).epsilon(1e-12));
}

TEST_CASE("predictions collapse when the between-study spread vanishes") {
  const ModelSpec spec = case_spec(Dep::none);
  const ParameterLayout layout(spec, 2);
  auto st = centre(layout);
  for (auto& s : st.sigma) s = {0.0, 0.0};
  st.mu[1] = {-0.8, 1.1};
  CounterRng rng(1, 0);
  const auto pred = predict_new_study(layout, st, rng);
  const auto a = predicted_accuracy(layout, pred, 1), b = summary_accuracy(layout, st, 1);
  CHECK(a.se == Approx(b.se));
  CHECK(a.sp == Approx(b.sp));
}

TEST_CASE("rho of one makes predicted perturbations perfectly rank-correlated") {
  const ModelSpec spec = case_spec(Dep::none);
  const ParameterLayout layout(spec, 2);
  auto st = centre(layout);
  st.rho[1] = 1.0;
  CounterRng rng(2, 0);
  std::vector<double> nu0, nu1;
  for (int i = 0; i < 500; ++i) {
    const auto p = predict_new_study(layout, st, rng);
    nu0.push_back(p.nu[1][0]);
    nu1.push_back(p.nu[1][1]);
  }
  // Same ordering of both perturbations.
  std::vector<std::size_t> i0(500), i1(500);
  for (std::size_t i = 0; i < 500; ++i) i0[i] = i1[i] = i;
  std::sort(i0.begin(), i0.end(), [&](auto x, auto y) { return nu0[x] < nu0[y]; });
  std::sort(i1.begin(), i1.end(), [&](auto x, auto y) { return nu1[x] < nu1[y]; });
  CHECK(i0 == i1);
}

TEST_CASE("joint accuracy") {
  const ModelSpec spec = case_spec(Dep::all);
  const ParameterLayout layout(spec, 2);
  auto st = centre(layout);
  st.mu[0] = {-30.0, 30.0};
  st.mu[1] = {-30.0, 30.0};
  for (Strategy s : {Strategy::btn, Strategy::btp}) {
    const auto j = joint_accuracy(layout, st, 0, 1, std::nullopt, std::nullopt, s);
    CHECK(j.se == Approx(1.0));
    CHECK(j.sp == Approx(1.0));
  }
  // Under independence BTN multiplies sensitivities and BTP multiplies specificities.
  st.mu[0] = {-0.5, 0.7};
  st.mu[1] = {-0.2, 1.0};
  const auto a = summary_accuracy(layout, st, 0), b = summary_accuracy(layout, st, 1);
  const auto btn = joint_accuracy(layout, st, 0, 1, std::nullopt, std::nullopt, Strategy::btn);
  CHECK(btn.cov_diseased == 0.0);  // global correlations are zero at the centre
  CHECK(btn.se == Approx(a.se * b.se));
  const auto btp = joint_accuracy(layout, st, 0, 1, std::nullopt, std::nullopt, Strategy::btp);
  CHECK(btp.sp == Approx(a.sp * b.sp));
  CHECK(parse_strategy("btp") == Strategy::btp);
  CHECK_THROWS(parse_strategy("either"));
  const auto tests = case_tests();
  const JointRequest r = parse_joint(tests, "DD,Wells,0,2,BTN");
  CHECK(r.t == 1);
  CHECK(r.t2 == 2);
  CHECK(!r.k);
  CHECK(*r.k2 == 2);
  CHECK_THROWS(parse_joint(tests, "DD,Wells,0,BTN"));
}

TEST_CASE("summaries of draws") {
  Estimand e{"Se", Scope::summary, 0, "DD", "", ""};
  CHECK(e.name() == "Se_G[DD]");
  const std::vector<double> constant(100, 0.7);
  const auto s = summarize_values(e, constant);
  CHECK(s.median == 0.7);
  CHECK(s.lower == 0.7);
  CHECK(s.upper == 0.7);
  std::vector<double> v(1000);
  for (int i = 0; i < 1000; ++i) v[i] = i;
  const auto q = summarize_values(e, v);
  CHECK(q.median == Approx(499.5));
  CHECK(q.lower == Approx(24.975));
  CHECK(q.upper == Approx(974.025));
}

TEST_CASE("estimand tables and sROC data") {
  const ModelSpec spec = case_spec(Dep::all);
  const ParameterLayout layout(spec, 3);
  CounterRng rng(5, 0);
  std::vector<ParameterState<double>> states;
  for (int i = 0; i < 200; ++i) states.push_back(sample_prior(layout, rng));
  EstimandRequest req;
  req.studies = true;
  req.joint.push_back(parse_joint(case_tests(), "DD,Wells,-,1,BTP"));
  const auto table = compute_estimands(layout, states, req);
  CHECK(table.joint_evaluations == 200);
  for (const auto& row : table.values) CHECK(row.size() == 200);
  const auto again = compute_estimands(layout, states, req);
  for (std::size_t e = 0; e < table.values.size(); ++e)
    for (std::size_t i = 0; i < 200; ++i) {
      CHECK(again.values[e][i] == table.values[e][i]);
    }
  const auto rows = summarize(table);
  std::ostringstream out;
  write_summary_csv(out, rows);
  CHECK(out.str().rfind("estimand,measure,scope,study,test,cutpoint,strategy,median,lower,upper\n", 0) == 0);
  const auto sroc = sroc_data(table);
  CHECK(sroc.size() == 5);  // US, DD, Wells at two thresholds, the joint pair
  for (const auto& e : sroc) {
    CHECK(e.fpr.size() == 200);
    CHECK(e.pred_fpr.size() == (e.test == "DD&Wells" ? 0 : 200));
    std::size_t inside = 0;
    for (std::size_t i = 0; i < e.fpr.size(); ++i) inside += e.posterior.contains(e.fpr[i], e.se[i]);
    CHECK(inside > 170);
  }
}

TEST_CASE("ellipse fit") {
  CounterRng rng(9, 0);
  std::vector<double> x, y;
  for (int i = 0; i < 5000; ++i) {
    const double a = rng.normal(), b = 0.5 * a + rng.normal();
    x.push_back(inv_logit(-1.0 + 0.3 * a));
    y.push_back(inv_logit(1.5 + 0.4 * b));
  }
  const Ellipse e = fit_ellipse(x, y);
  CHECK(e.center_x == Approx(-1.0).epsilon(0.02));
  CHECK(e.center_y == Approx(1.5).epsilon(0.02));
  std::size_t inside = 0;
  for (std::size_t i = 0; i < x.size(); ++i) inside += e.contains(x[i], y[i]);
  CHECK(static_cast<double>(inside) / x.size() == Approx(0.95).epsilon(0.02));
  const auto poly = e.outline(50);
  CHECK(poly.size() >= 50);
  CHECK(poly.front() == poly.back());
  // Degenerate cloud: ridge keeps the fit finite.
  const std::vector<double> cx(10, 0.2), cy(10, 0.8);
  CHECK(std::isfinite(fit_ellipse(cx, cy).sxx));
}
