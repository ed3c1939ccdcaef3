#include "mvplc/config.hpp"

#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "json.hpp"

#include "mvplc/prior.hpp"

namespace mvplc {

using json = nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <class T>
void get_if(const json& j, const char* key, const std::string& where, T& out) {
  if (j.contains(key)) out = get<T>(j, key, where);
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

std::pair<double, double> interval(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2) throw ConfigError(where + ": expected [lower, upper]");
  const double lo = j[0].get<double>(), hi = j[1].get<double>();
  if (!(lo < hi)) throw ConfigError(where + ": lower must be below upper");
  return {lo, hi};
}

NormalPrior normal(const json& j, const std::string& where) {
  check_keys(j, {"location", "scale"}, where);
  NormalPrior p{get<double>(j, "location", where), get<double>(j, "scale", where)};
  if (!(p.scale > 0.0)) throw ConfigError(where + ".scale must be positive");
  return p;
}

std::string id_string(const json& j) { return j.is_string() ? j.get<std::string>() : std::to_string(j.get<long>()); }

void parse_priors(const json& j, PriorOverrides& p) {
  const std::string w = "priors";
  check_keys(j, {"mu", "sigma_upper", "rho_upper", "within_upper", "lkj_eta", "kappa_scale", "prevalence"}, w);
  if (j.contains("mu")) {
    const json& mu = j["mu"];
    if (!mu.is_object()) throw ConfigError(w + ".mu: expected an object keyed by test");
    for (const auto& [test, spec] : mu.items()) {
      const std::string ww = w + ".mu." + test;
      check_keys(spec, {"se_interval", "sp_interval", "diseased", "non_diseased"}, ww);
      MuOverride o;
      o.test = test;
      if (spec.contains("se_interval")) o.se_interval = interval(spec["se_interval"], ww + ".se_interval");
      if (spec.contains("sp_interval")) o.sp_interval = interval(spec["sp_interval"], ww + ".sp_interval");
      if (spec.contains("diseased")) o.diseased = normal(spec["diseased"], ww + ".diseased");
      if (spec.contains("non_diseased")) o.non_diseased = normal(spec["non_diseased"], ww + ".non_diseased");
      if ((o.se_interval && o.diseased) || (o.sp_interval && o.non_diseased))
        throw ConfigError(ww + ": give either an interval or a normal prior per class, not both");
      p.mu.push_back(std::move(o));
    }
  }
  auto positive = [&](const char* key, std::optional<double>& out, double max = 1e300) {
    if (!j.contains(key)) return;
    const double v = get<double>(j, key, w);
    if (!(v > 0.0 && v < max)) throw ConfigError(w + "." + key + " out of range");
    out = v;
  };
  positive("sigma_upper", p.sigma_upper);
  positive("rho_upper", p.rho_upper, 1.0);
  positive("within_upper", p.within_upper, 1.0);
  positive("lkj_eta", p.lkj_eta);
  positive("kappa_scale", p.kappa_scale);
  if (j.contains("prevalence")) {
    const json& b = j["prevalence"];
    if (!b.is_array() || b.size() != 2) throw ConfigError(w + ".prevalence: expected [a, b]");
    const double a = b[0].get<double>(), bb = b[1].get<double>();
    if (!(a > 0.0 && bb > 0.0)) throw ConfigError(w + ".prevalence: shapes must be positive");
    p.prevalence = {a, bb};
  }
}

void parse_sampler(const json& j, SamplerConfig& c) {
  const std::string w = "sampler";
  check_keys(j, {"chains", "warmup", "samples", "target_accept", "max_treedepth", "seed", "init_radius", "parallel"},
             w);
  get_if(j, "chains", w, c.chains);
  get_if(j, "warmup", w, c.warmup);
  get_if(j, "samples", w, c.samples);
  get_if(j, "target_accept", w, c.target_accept);
  get_if(j, "max_treedepth", w, c.max_treedepth);
  get_if(j, "seed", w, c.seed);
  get_if(j, "init_radius", w, c.init_radius);
  get_if(j, "parallel", w, c.parallel);
  try {
    c.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("sampler: ") + e.what());
  }
}

json dependence_json(const DependenceConfig& d) {
  switch (d.kind) {
    case DependenceConfig::Kind::none: return "none";
    case DependenceConfig::Kind::all: return "all";
    default: break;
  }
  json arr = json::array();
  for (const auto& [a, b] : d.pairs) arr.push_back({a, b});
  return arr;
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text, const std::filesystem::path& base) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(root, {"name", "data", "model", "priors", "sampler", "output", "simulate", "analysis"}, "config");
  RunConfig c;
  c.text = text;
  get_if(root, "name", "config", c.name);

  if (root.contains("data")) {
    const json& d = root["data"];
    check_keys(d, {"counts", "tests"}, "data");
    if (d.contains("counts")) c.counts = resolve(base, get<std::string>(d, "counts", "data"));
    if (d.contains("tests")) c.tests = resolve(base, get<std::string>(d, "tests", "data"));
  }

  if (root.contains("model")) {
    const json& m = root["model"];
    const std::string w = "model";
    check_keys(m, {"reference_test", "perfect_reference", "dependence", "ghk_nodes", "ghk_seed"}, w);
    if (m.contains("reference_test")) c.reference_test = id_string(m["reference_test"]);
    get_if(m, "perfect_reference", w, c.perfect_reference);
    get_if(m, "ghk_nodes", w, c.ghk_nodes);
    get_if(m, "ghk_seed", w, c.ghk_seed);
    if (c.ghk_nodes < 1) throw ConfigError("model.ghk_nodes must be positive");
    if (m.contains("dependence")) {
      const json& dep = m["dependence"];
      if (dep.is_string()) {
        const auto s = dep.get<std::string>();
        if (s == "none") c.dependence.kind = DependenceConfig::Kind::none;
        else if (s == "all") c.dependence.kind = DependenceConfig::Kind::all;
        else throw ConfigError("model.dependence: expected \"none\", \"all\" or a list of test pairs");
      } else if (dep.is_array()) {
        c.dependence.kind = DependenceConfig::Kind::pairs;
        for (const json& p : dep) {
          if (!p.is_array() || p.size() != 2) throw ConfigError("model.dependence: each pair needs two tests");
          c.dependence.pairs.emplace_back(id_string(p[0]), id_string(p[1]));
        }
      } else {
        throw ConfigError("model.dependence: expected a string or a list of pairs");
      }
    }
  }

  if (root.contains("priors")) parse_priors(root["priors"], c.priors);
  if (root.contains("sampler")) parse_sampler(root["sampler"], c.sampler);

  if (root.contains("output")) {
    check_keys(root["output"], {"dir"}, "output");
    if (root["output"].contains("dir")) c.output_dir = resolve(base, get<std::string>(root["output"], "dir", "output"));
  } else {
    c.output_dir = resolve(base, "mvplc_out");
  }

  if (root.contains("simulate")) {
    const json& s = root["simulate"];
    const std::string w = "simulate";
    check_keys(s, {"truth", "studies", "individuals", "seed"}, w);
    SimulateConfig sc;
    sc.truth = resolve(base, get<std::string>(s, "truth", w));
    if (s.contains("studies")) sc.studies = get<std::size_t>(s, "studies", w);
    get_if(s, "individuals", w, sc.individuals);
    get_if(s, "seed", w, sc.seed);
    if (sc.individuals == 0) throw ConfigError("simulate.individuals must be positive");
    c.simulate = sc;
  }

  if (root.contains("analysis")) {
    const json& a = root["analysis"];
    const std::string w = "analysis";
    check_keys(a, {"tests", "prediction", "studies", "joint", "ppc_replicates", "seed"}, w);
    if (a.contains("tests"))
      for (const json& t : a["tests"]) c.analysis.tests.push_back(id_string(t));
    get_if(a, "prediction", w, c.analysis.prediction);
    get_if(a, "studies", w, c.analysis.studies);
    get_if(a, "joint", w, c.analysis.joint);
    get_if(a, "ppc_replicates", w, c.analysis.ppc_replicates);
    get_if(a, "seed", w, c.analysis.seed);
    if (c.analysis.ppc_replicates == 0) throw ConfigError("analysis.ppc_replicates must be positive");
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig c = parse(ss.str(), path.parent_path());
  c.source = path;
  if (c.name.empty()) c.name = path.stem().string();
  return c;
}

std::string RunConfig::resolved_json() const {
  json j;
  j["name"] = name;
  j["data"] = {{"counts", counts.string()}, {"tests", tests.string()}};
  j["model"] = {{"reference_test", reference_test},
                {"perfect_reference", perfect_reference},
                {"dependence", dependence_json(dependence)},
                {"ghk_nodes", ghk_nodes},
                {"ghk_seed", ghk_seed}};
  json pr = json::object();
  for (const auto& m : priors.mu) {
    json o = json::object();
    if (m.se_interval) o["se_interval"] = {m.se_interval->first, m.se_interval->second};
    if (m.sp_interval) o["sp_interval"] = {m.sp_interval->first, m.sp_interval->second};
    if (m.diseased) o["diseased"] = {{"location", m.diseased->location}, {"scale", m.diseased->scale}};
    if (m.non_diseased) o["non_diseased"] = {{"location", m.non_diseased->location}, {"scale", m.non_diseased->scale}};
    pr["mu"][m.test] = o;
  }
  if (priors.sigma_upper) pr["sigma_upper"] = *priors.sigma_upper;
  if (priors.rho_upper) pr["rho_upper"] = *priors.rho_upper;
  if (priors.within_upper) pr["within_upper"] = *priors.within_upper;
  if (priors.lkj_eta) pr["lkj_eta"] = *priors.lkj_eta;
  if (priors.kappa_scale) pr["kappa_scale"] = *priors.kappa_scale;
  if (priors.prevalence) pr["prevalence"] = {priors.prevalence->first, priors.prevalence->second};
  j["priors"] = pr;
  j["sampler"] = {{"chains", sampler.chains},           {"warmup", sampler.warmup},
                  {"samples", sampler.samples},         {"target_accept", sampler.target_accept},
                  {"max_treedepth", sampler.max_treedepth}, {"seed", sampler.seed},
                  {"init_radius", sampler.init_radius}, {"parallel", sampler.parallel}};
  j["output"] = {{"dir", output_dir.string()}};
  if (simulate)
    j["simulate"] = {{"truth", simulate->truth.string()},
                     {"studies", simulate->studies ? json(*simulate->studies) : json(nullptr)},
                     {"individuals", simulate->individuals},
                     {"seed", simulate->seed}};
  j["analysis"] = {{"tests", analysis.tests},   {"prediction", analysis.prediction},
                   {"studies", analysis.studies}, {"joint", analysis.joint},
                   {"ppc_replicates", analysis.ppc_replicates}, {"seed", analysis.seed}};
  j["dichotomise"] = dichotomise ? json{{"test", dichotomise->first}, {"threshold", dichotomise->second}} : json(nullptr);
  return j.dump(2);
}

ModelSpec build_model_spec(const RunConfig& c, std::span<const TestDefinition> tests) {
  ModelSpec spec;
  spec.tests.assign(tests.begin(), tests.end());
  const std::size_t n = tests.size();
  try {
    spec.reference_test = c.reference_test.empty() ? 0 : find_test(tests, c.reference_test);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("model.reference_test: ") + e.what());
  }
  spec.perfect.assign(n, false);
  if (c.perfect_reference) {
    if (tests[spec.reference_test].is_ordinal())
      throw ConfigError("model.perfect_reference: the reference test must be dichotomous");
    spec.perfect[spec.reference_test] = true;
  }
  switch (c.dependence.kind) {
    case DependenceConfig::Kind::none: spec.mask = CorrelationMask::none(n); break;
    case DependenceConfig::Kind::all: spec.mask = CorrelationMask::all(n); break;
    case DependenceConfig::Kind::pairs:
      spec.mask = CorrelationMask(n);
      for (const auto& [a, b] : c.dependence.pairs) {
        std::size_t i = 0, j = 0;
        try {
          i = find_test(tests, a);
          j = find_test(tests, b);
        } catch (const std::exception& e) {
          throw ConfigError(std::string("model.dependence: ") + e.what());
        }
        if (i == j) throw ConfigError("model.dependence: a pair needs two different tests");
        spec.mask.set(i, j);
      }
      break;
  }
  spec.ghk_nodes = c.ghk_nodes;
  spec.ghk_seed = c.ghk_seed;

  PriorSpec& p = spec.priors;
  p = default_priors(tests, spec.reference_test, spec.mask);
  const PriorOverrides& o = c.priors;
  for (const auto& m : o.mu) {
    std::size_t t = 0;
    try {
      t = find_test(tests, m.test);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("priors.mu: ") + e.what());
    }
    if ((m.se_interval || m.sp_interval) && tests[t].is_ordinal())
      throw ConfigError("priors.mu." + m.test + ": intervals apply to dichotomous tests only");
    if (m.se_interval) p.mu[t][1] = interval_to_probit_normal(m.se_interval->first, m.se_interval->second);
    if (m.sp_interval) {
      const NormalPrior sp = interval_to_probit_normal(m.sp_interval->first, m.sp_interval->second);
      p.mu[t][0] = {-sp.location, sp.scale};
    }
    if (m.diseased) p.mu[t][1] = *m.diseased;
    if (m.non_diseased) p.mu[t][0] = *m.non_diseased;
  }
  if (o.sigma_upper) {
    const double s = half_normal_scale_for_upper(*o.sigma_upper);
    for (auto& row : p.sigma_scale) row = {s, s};
  }
  if (o.rho_upper) p.rho_scale = tanh_normal_scale_for_interval(*o.rho_upper);
  if (o.within_upper) p.lkj_eta = lkj_eta_for_interval(*o.within_upper, std::max<std::size_t>(2, spec.mask.largest_block()));
  if (o.lkj_eta) p.lkj_eta = *o.lkj_eta;
  if (o.kappa_scale) p.kappa_scale = *o.kappa_scale;
  if (o.prevalence) {
    p.prevalence_a = o.prevalence->first;
    p.prevalence_b = o.prevalence->second;
  }
  try {
    spec.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  return spec;
}

MetaDataset load_dataset(const RunConfig& c, std::string* warning) {
  if (c.tests.empty()) throw ConfigError("data.tests is required");
  if (c.counts.empty()) throw ConfigError("data.counts is required");
  if (!std::filesystem::exists(c.tests)) throw ConfigError("test metadata file not found: " + c.tests.string());
  if (!std::filesystem::exists(c.counts)) throw ConfigError("counts file not found: " + c.counts.string());
  const std::vector<TestDefinition> tests = read_test_metadata(c.tests);
  MetaDataset data = expand_to_individuals(parse_aggregated(c.counts, tests), tests);
  if (c.dichotomise) {
    const std::size_t t = find_test(data.tests(), c.dichotomise->first);
    DichotomiseResult r = dichotomise(data, t, c.dichotomise->second);
    if (warning && r.warning) *warning = *r.warning;
    return std::move(r.dataset);
  }
  return data;
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace mvplc
