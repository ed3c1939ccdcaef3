#ifndef MVPLC_CONFIG_HPP
#define MVPLC_CONFIG_HPP

// Run configuration: one JSON file whose sections mirror the modules. Unknown
// keys are rejected everywhere so that misspelt prior names fail loudly.
// Relative paths resolve against the directory of the config file.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mvplc/data.hpp"
#include "mvplc/sampler.hpp"
#include "mvplc/spec.hpp"

namespace mvplc {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DependenceConfig {
  enum class Kind { none, all, pairs } kind = Kind::none;
  std::vector<std::pair<std::string, std::string>> pairs;  // by test label or 1-based index
};

struct MuOverride {
  std::string test;
  std::optional<std::pair<double, double>> se_interval, sp_interval;
  std::optional<NormalPrior> diseased, non_diseased;
};

struct PriorOverrides {
  std::vector<MuOverride> mu;
  std::optional<double> sigma_upper;   // 97.5% point of every between-study SD
  std::optional<double> rho_upper;     // rho central 95% interval (-u, u)
  std::optional<double> within_upper;  // within-study correlations (-u, u)
  std::optional<double> lkj_eta;       // overrides within_upper
  std::optional<double> kappa_scale;
  std::optional<std::pair<double, double>> prevalence;  // Beta(a, b)
};

struct SimulateConfig {
  std::filesystem::path truth;
  std::optional<std::size_t> studies;
  std::size_t individuals = 200;
  std::uint64_t seed = 1;
};

struct AnalysisConfig {
  std::vector<std::string> tests;  // empty = all
  bool prediction = true;
  bool studies = false;
  std::vector<std::string> joint;  // "t,t',k,k',BTN|BTP"
  std::size_t ppc_replicates = 500;
  std::uint64_t seed = 1;
};

struct RunConfig {
  std::filesystem::path source;  // the file itself (empty when parsed from text)
  std::string name;              // model label in comparison tables
  std::filesystem::path counts, tests;
  std::string reference_test;  // label or 1-based index; default the first test
  bool perfect_reference = false;
  DependenceConfig dependence;
  int ghk_nodes = 256;
  std::uint64_t ghk_seed = 20240601;
  PriorOverrides priors;
  SamplerConfig sampler;
  std::filesystem::path output_dir = "mvplc_out";
  std::optional<SimulateConfig> simulate;
  AnalysisConfig analysis;
  std::optional<std::pair<std::string, int>> dichotomise;  // test, threshold
  std::string text;  // the raw JSON, for hashing

  /// Applies defaults and validates; paths resolve against `base`.
  static RunConfig parse(const std::string& json_text, const std::filesystem::path& base = {});
  static RunConfig load(const std::filesystem::path& path);

  /// Canonical JSON of the resolved configuration (including CLI overrides).
  std::string resolved_json() const;
};

/// Builds the model specification for the given test definitions.
ModelSpec build_model_spec(const RunConfig& config, std::span<const TestDefinition> tests);

/// Reads the dataset named by the config and applies any dichotomisation.
/// A dichotomisation warning, if any, is returned through `warning`.
MetaDataset load_dataset(const RunConfig& config, std::string* warning = nullptr);

/// 64-bit FNV-1a of a string, as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

}  // namespace mvplc

#endif  // MVPLC_CONFIG_HPP
