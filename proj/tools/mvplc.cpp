// Command-line driver: fit, simulate, summarize, loo, ppc.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mvplc/analysis.hpp"
#include "mvplc/config.hpp"
#include "mvplc/evaluation.hpp"
#include "mvplc/model.hpp"
#include "mvplc/prior.hpp"
#include "mvplc/sampler.hpp"
#include "mvplc/simulator.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace mvplc;

namespace {

constexpr int kOk = 0, kError = 1, kGatesFailed = 2;

struct Options {
  std::vector<std::string> configs;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string dichotomise;
  std::vector<std::string> joint;
  std::vector<std::string> runs;  // loo: fitted run directory per config
};

RunConfig load_config(const std::string& path, const Options& o, const std::string& command) {
  RunConfig c = RunConfig::load(path);
  if (!o.out.empty()) c.output_dir = o.out;
  if (o.seed) {
    if (command == "fit") c.sampler.seed = *o.seed;
    else if (command == "simulate" && c.simulate) c.simulate->seed = *o.seed;
    else c.analysis.seed = *o.seed;
  }
  if (!o.dichotomise.empty()) {
    const auto colon = o.dichotomise.rfind(':');
    if (colon == std::string::npos || colon == 0) throw ConfigError("--dichotomise expects <test>:<k>");
    int k = 0;
    try {
      k = std::stoi(o.dichotomise.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("--dichotomise: threshold is not an integer");
    }
    c.dichotomise = std::make_pair(o.dichotomise.substr(0, colon), k);
  }
  for (const auto& j : o.joint) c.analysis.joint.push_back(j);
  return c;
}

std::string file_hash(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return "";
  std::stringstream ss;
  ss << in.rdbuf();
  return fnv1a_hex(ss.str());
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  return f;
}

void write_manifest(const RunConfig& c, const std::string& command, const std::vector<std::string>& outputs) {
  const std::string resolved = c.resolved_json();
  json m;
  m["command"] = command;
  m["version"] = MVPLC_VERSION;
  m["config_file"] = c.source.string();
  m["config_hash"] = fnv1a_hex(resolved);
  m["config"] = json::parse(resolved);
  m["seed"] = {{"sampler", c.sampler.seed}, {"analysis", c.analysis.seed}};
  if (c.simulate) m["seed"]["simulate"] = c.simulate->seed;
  m["inputs"] = json::object();
  if (!c.counts.empty()) m["inputs"]["counts"] = file_hash(c.counts);
  if (!c.tests.empty()) m["inputs"]["tests"] = file_hash(c.tests);
  m["outputs"] = outputs;
  auto f = open_out(c.output_dir / "manifest.json");
  f << m.dump(2) << '\n';
}

struct Problem {
  RunConfig config;
  MetaDataset data;
  Model model;
};

Problem make_problem(RunConfig c) {
  std::string warning;
  MetaDataset data = load_dataset(c, &warning);
  if (!warning.empty()) std::cerr << "warning: " << warning << '\n';
  ModelSpec spec = build_model_spec(c, data.tests());
  Model model(std::move(spec), data);
  return {std::move(c), std::move(data), std::move(model)};
}

EstimandRequest estimand_request(const RunConfig& c, std::span<const TestDefinition> tests) {
  EstimandRequest r;
  for (const auto& t : c.analysis.tests) r.tests.push_back(find_test(tests, t));
  r.prediction = c.analysis.prediction;
  r.studies = c.analysis.studies;
  for (const auto& j : c.analysis.joint) r.joint.push_back(parse_joint(tests, j));
  r.seed = c.analysis.seed;
  return r;
}

std::vector<std::string> write_summaries(const Problem& p, std::span<const ParameterState<double>> states) {
  const EstimandTable table = compute_estimands(p.model.layout(), states, estimand_request(p.config, p.data.tests()));
  if (table.joint_clamped > 0)
    std::cerr << "warning: " << table.joint_clamped << " of " << table.joint_evaluations
              << " joint accuracy evaluations were clamped to [0, 1]\n";
  const auto rows = summarize(table);
  const fs::path dir = p.config.output_dir;
  {
    auto f = open_out(dir / "summary.csv");
    write_summary_csv(f, rows);
  }
  const auto sroc = sroc_data(table);
  {
    auto f = open_out(dir / "sroc_points.csv");
    write_sroc_points_csv(f, sroc);
  }
  {
    auto f = open_out(dir / "sroc_ellipses.csv");
    write_sroc_ellipses_csv(f, sroc);
  }
  std::cout << std::fixed << std::setprecision(3);
  for (const auto& r : rows)
    std::cout << std::left << std::setw(36) << r.estimand.name() << ' ' << r.median << " [" << r.lower << ", "
              << r.upper << "]\n";
  std::cout.unsetf(std::ios::floatfield);
  return {"summary.csv", "sroc_points.csv", "sroc_ellipses.csv"};
}

std::vector<ParameterState<double>> load_states(const Problem& p) {
  const fs::path path = p.config.output_dir / "points.csv";
  std::ifstream in(path);
  if (!in) throw ConfigError("no fitted draws at " + path.string() + "; run `mvplc fit` first");
  const PosteriorDraws draws = read_draws_csv(in, true);
  if (draws.num_params() != p.model.dim())
    throw ConfigError(path.string() + " does not match the configured model (dimension " +
                      std::to_string(draws.num_params()) + " vs " + std::to_string(p.model.dim()) + ")");
  return draw_states(p.model.layout(), draws);
}

int cmd_fit(const RunConfig& c) {
  Problem p = make_problem(c);
  const ParameterLayout& layout = p.model.layout();
  Target target;
  target.dim = p.model.dim();
  target.log_density_gradient = [&](std::span<const double> x, std::span<double> g) {
    return p.model.log_density_gradient(x, g);
  };
  target.generate = [&](std::span<const double> x) { return constrained_values(layout, p.model.state(x)); };
  target.names = constrained_names(layout);

  std::cerr << "fitting " << p.config.name << ": " << p.data.num_studies() << " studies, "
            << p.data.num_individuals() << " individuals, " << target.dim << " parameters\n";
  const PosteriorDraws draws = run_chains(target, p.config.sampler);

  fs::create_directories(p.config.output_dir);
  const fs::path dir = p.config.output_dir;
  {
    auto f = open_out(dir / "draws.csv");
    write_draws_csv(f, draws);
  }
  {
    auto f = open_out(dir / "points.csv");
    write_points_csv(f, draws, layout.unconstrained_names());
  }
  const GateThresholds gates;
  const DiagnosticsReport report = diagnose(draws, gates, p.config.sampler.max_treedepth);
  {
    auto f = open_out(dir / "diagnostics.json");
    write_diagnostics_json(f, report, gates);
  }
  std::vector<std::string> outputs = {"draws.csv", "points.csv", "diagnostics.json"};
  const auto states = draw_states(layout, draws);
  for (auto& o : write_summaries(p, states)) outputs.push_back(o);
  outputs.push_back("manifest.json");
  write_manifest(p.config, "fit", outputs);

  std::cerr << "max R-hat " << report.max_rhat << " (" << report.worst_rhat_parameter << "), min E-FMI "
            << report.min_efmi << ", divergences " << report.divergences << '\n';
  if (!report.passed()) {
    std::cerr << "diagnostic gates failed; results written to " << dir << " but should not be trusted\n";
    return kGatesFailed;
  }
  return kOk;
}

int cmd_summarize(const RunConfig& c) {
  Problem p = make_problem(c);
  const auto states = load_states(p);
  write_summaries(p, states);
  return kOk;
}

int cmd_loo(const std::vector<RunConfig>& configs, const std::string& out) {
  std::vector<NamedLoo> results;
  for (const RunConfig& c : configs) {
    Problem p = make_problem(c);
    const auto states = load_states(p);
    const PointwiseLogLik pll = pointwise_loglik(p.model, states);
    LooResult loo = psis_loo(pll);
    if (loo.high_k > 0)
      std::cerr << "warning: " << c.name << ": " << loo.high_k << " observations with Pareto k > 0.7\n";
    results.push_back({c.name, std::move(loo)});
  }
  const fs::path dir = out.empty() ? configs.front().output_dir : fs::path(out);
  fs::create_directories(dir);
  {
    auto f = open_out(dir / "loo_comparison.csv");
    write_loo_table(f, results);
  }
  write_loo_table(std::cout, results);
  json j = json::array();
  for (const auto& r : results)
    j.push_back({{"model", r.model},
                 {"elpd", r.loo.elpd},
                 {"se", r.loo.se},
                 {"looic", r.loo.looic},
                 {"p_loo", r.loo.p_loo},
                 {"mcse", r.loo.mcse},
                 {"high_pareto_k", r.loo.high_k},
                 {"points", r.loo.size()}});
  auto f = open_out(dir / "loo.json");
  f << j.dump(2) << '\n';
  return kOk;
}

int cmd_ppc(const RunConfig& c) {
  Problem p = make_problem(c);
  const auto states = load_states(p);
  const auto& a = p.config.analysis;
  const auto corr = ppc_correlation_residuals(p.model.layout(), p.data, states, a.ppc_replicates, a.seed);
  const auto counts = ppc_count_residuals(p.model.layout(), p.data, states, a.ppc_replicates, a.seed);
  const fs::path dir = p.config.output_dir;
  fs::create_directories(dir);
  {
    auto f = open_out(dir / "ppc_correlation.csv");
    write_correlation_residuals_csv(f, p.data, corr);
  }
  {
    auto f = open_out(dir / "ppc_counts.csv");
    write_count_residuals_csv(f, p.data, counts);
  }
  std::cout << "correlation residual intervals covering 0: " << coverage(std::span<const CorrelationResidual>(corr))
            << "\ncount intervals covering the observed count: " << coverage(std::span<const CountResidual>(counts))
            << '\n';
  return kOk;
}

int cmd_simulate(const RunConfig& c) {
  if (!c.simulate) throw ConfigError("simulate: the config needs a \"simulate\" section");
  if (c.tests.empty()) throw ConfigError("data.tests is required");
  const std::vector<TestDefinition> tests = read_test_metadata(c.tests);
  std::ifstream tin(c.simulate->truth);
  if (!tin) throw ConfigError("cannot open truth file " + c.simulate->truth.string());
  std::stringstream ss;
  ss << tin.rdbuf();
  const json tj = json::parse(ss.str());
  if (!tj.contains("prevalence") || !tj["prevalence"].is_array())
    throw ConfigError("truth: prevalence must list one value per study");
  const std::size_t studies = tj["prevalence"].size();
  if (c.simulate->studies && *c.simulate->studies != studies)
    throw ConfigError("simulate.studies disagrees with the number of prevalences in the truth file");

  const ModelSpec spec = build_model_spec(c, tests);
  const ParameterLayout layout(spec, studies);
  TrueParameters truth;
  if (!truth_from_json(layout, ss.str(), truth)) {
    CounterRng rng(c.simulate->seed, 0);
    draw_study_effects(layout, truth, rng);
  }
  const std::vector<std::size_t> sizes(studies, c.simulate->individuals);
  CounterRng seeder(c.simulate->seed, 1);
  const MetaDataset data = simulate_dataset(layout, truth, sizes, seeder());

  const fs::path dir = c.output_dir;
  fs::create_directories(dir);
  {
    auto f = open_out(dir / "counts.csv");
    write_aggregated(f, aggregate(data), tests);
  }
  {
    auto f = open_out(dir / "tests.json");
    f << test_metadata_json(tests) << '\n';
  }
  {
    auto f = open_out(dir / "truth.json");
    f << truth_to_json(layout, truth) << '\n';
  }
  write_manifest(c, "simulate", {"counts.csv", "tests.json", "truth.json", "manifest.json"});
  std::cerr << "simulated " << studies << " studies of " << c.simulate->individuals << " individuals into " << dir
            << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian latent class meta-analysis of diagnostic tests"};
  app.set_version_flag("--version", std::string(MVPLC_VERSION));
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* sub, bool many_configs) {
    auto* c = sub->add_option("--config", opt.configs, "Run configuration (JSON)")->required();
    if (!many_configs) c->expected(1);
    sub->add_option("--out", opt.out, "Output directory (overrides output.dir)");
    sub->add_option("--seed", opt.seed, "Seed override");
    sub->add_option("--dichotomise", opt.dichotomise, "Dichotomise an ordinal test before fitting: <test>:<k>");
    sub->add_option("--joint", opt.joint, "Joint estimand: <t>,<t'>,<k>,<k'>,<BTN|BTP> (repeatable)");
  };
  auto* fit = app.add_subcommand("fit", "Fit a model and write draws, diagnostics and summaries");
  auto* sim = app.add_subcommand("simulate", "Simulate a dataset from a truth file");
  auto* sum = app.add_subcommand("summarize", "Recompute accuracy summaries from fitted draws");
  auto* loo = app.add_subcommand("loo", "PSIS-LOO for one or more fitted configs");
  auto* ppc = app.add_subcommand("ppc", "Posterior predictive checks of a fitted config");
  for (auto* s : {fit, sim, sum, ppc}) add_common(s, false);
  add_common(loo, true);
  loo->add_option("--runs", opt.runs, "Fitted run directory for each --config, in order (default: each config's output.dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kError;
  }

  try {
    if (loo->parsed()) {
      if (!opt.runs.empty() && opt.runs.size() != opt.configs.size())
        throw ConfigError("--runs needs one directory per --config");
      std::vector<RunConfig> configs;
      for (std::size_t i = 0; i < opt.configs.size(); ++i) {
        Options per = opt;
        // A single config reads its run from --out, like the other subcommands.
        per.out = !opt.runs.empty() ? opt.runs[i] : opt.configs.size() == 1 ? opt.out : std::string();
        configs.push_back(load_config(opt.configs[i], per, "loo"));
      }
      return cmd_loo(configs, opt.out);
    }
    const std::string command = fit->parsed() ? "fit" : sim->parsed() ? "simulate" : sum->parsed() ? "summarize" : "ppc";
    const RunConfig c = load_config(opt.configs.front(), opt, command);
    if (command == "fit") return cmd_fit(c);
    if (command == "simulate") return cmd_simulate(c);
    if (command == "summarize") return cmd_summarize(c);
    return cmd_ppc(c);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kError;
  }
}
