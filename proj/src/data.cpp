#include "mvplc/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace mvplc {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

long parse_integer(const std::string& s, std::size_t line, const char* what) {
  std::size_t pos = 0;
  long v = 0;
  try {
    v = std::stol(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (s.empty() || pos != s.size())
    throw DataError("line " + std::to_string(line) + ": malformed " + what + " '" + s + "'");
  return v;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

void TestDefinition::validate() const {
  if (kind == TestKind::dichotomous && num_categories != 2)
    throw DataError("test '" + label + "': dichotomous tests have exactly 2 categories");
  if (kind == TestKind::ordinal && num_categories < 3)
    throw DataError("test '" + label + "': ordinal tests need at least 3 categories");
}

MetaDataset::MetaDataset(std::vector<TestDefinition> tests, std::vector<StudyData> studies)
    : tests_(std::move(tests)), studies_(std::move(studies)) {
  if (tests_.empty()) throw DataError("dataset has no tests");
  for (const auto& t : tests_) t.validate();
  if (studies_.empty()) throw DataError("no studies");
  for (const auto& s : studies_) {
    if (s.individuals.empty()) throw DataError("study '" + s.study_id + "' has no individuals");
    for (const auto& y : s.individuals) {
      if (y.size() != tests_.size())
        throw DataError("study '" + s.study_id + "': every individual needs a result for all tests");
      for (std::size_t t = 0; t < y.size(); ++t)
        if (y[t] < 0 || y[t] >= tests_[t].num_categories)
          throw DataError("study '" + s.study_id + "': category out of range for test '" + tests_[t].label + "'");
    }
  }
}

std::size_t MetaDataset::num_individuals() const {
  std::size_t n = 0;
  for (const auto& s : studies_) n += s.individuals.size();
  return n;
}

std::size_t MetaDataset::num_patterns() const {
  std::size_t n = 1;
  for (const auto& t : tests_) n *= static_cast<std::size_t>(t.num_categories);
  return n;
}

long AggregatedStudy::total() const {
  long n = 0;
  for (const auto& [p, c] : counts) n += c;
  return n;
}

std::vector<TestDefinition> parse_test_metadata(const std::string& json_text) {
  const auto j = nlohmann::json::parse(json_text);
  if (!j.is_object() || !j.contains("tests") || !j["tests"].is_array())
    throw DataError("test metadata: expected an object with a 'tests' array");
  for (const auto& [key, _] : j.items())
    if (key != "tests") throw DataError("test metadata: unknown key '" + key + "'");
  std::vector<TestDefinition> tests;
  for (const auto& e : j["tests"]) {
    for (const auto& [key, _] : e.items())
      if (key != "label" && key != "kind" && key != "categories")
        throw DataError("test metadata: unknown key '" + key + "'");
    TestDefinition t;
    t.label = e.at("label").get<std::string>();
    const auto kind = e.at("kind").get<std::string>();
    if (kind == "dichotomous") {
      t.kind = TestKind::dichotomous;
      t.num_categories = e.value("categories", 2);
    } else if (kind == "ordinal") {
      t.kind = TestKind::ordinal;
      t.num_categories = e.at("categories").get<int>();
    } else {
      throw DataError("test metadata: unknown kind '" + kind + "'");
    }
    t.validate();
    tests.push_back(std::move(t));
  }
  if (tests.empty()) throw DataError("test metadata: no tests declared");
  return tests;
}

std::vector<TestDefinition> read_test_metadata(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open test metadata file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_test_metadata(ss.str());
}

std::string test_metadata_json(std::span<const TestDefinition> tests) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& t : tests) {
    nlohmann::json e{{"label", t.label}, {"kind", t.is_ordinal() ? "ordinal" : "dichotomous"}};
    e["categories"] = t.num_categories;
    arr.push_back(e);
  }
  return nlohmann::json{{"tests", arr}}.dump(2);
}

std::vector<AggregatedStudy> parse_aggregated(std::istream& in, std::span<const TestDefinition> tests) {
  const std::size_t num_tests = tests.size();
  std::vector<AggregatedStudy> studies;
  std::map<std::string, std::size_t> index;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    if (!header_seen) {
      header_seen = true;
      if (cells.size() != num_tests + 2)
        throw DataError("line " + std::to_string(line_no) + ": header must have study_id, one column per test, count");
      continue;
    }
    if (cells.size() != num_tests + 2)
      throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(num_tests + 2) + " fields, got " +
                      std::to_string(cells.size()));
    const std::string& study_id = cells[0];
    if (study_id.empty()) throw DataError("line " + std::to_string(line_no) + ": empty study_id");
    Pattern pattern(num_tests);
    for (std::size_t t = 0; t < num_tests; ++t) {
      const long code = parse_integer(cells[t + 1], line_no, "category");
      const long cat = code - tests[t].file_offset();
      if (cat < 0 || cat >= tests[t].num_categories)
        throw DataError("line " + std::to_string(line_no) + ": category " + std::to_string(code) +
                        " out of range for test '" + tests[t].label + "'");
      pattern[t] = static_cast<int>(cat);
    }
    const long count = parse_integer(cells[num_tests + 1], line_no, "count");
    if (count < 0) throw DataError("line " + std::to_string(line_no) + ": negative count");
    auto [it, inserted] = index.try_emplace(study_id, studies.size());
    if (inserted) studies.push_back({study_id, {}});
    auto& agg = studies[it->second];
    if (!agg.counts.emplace(pattern, count).second)
      throw DataError("line " + std::to_string(line_no) + ": duplicate pattern for study '" + study_id + "'");
  }
  if (studies.empty()) throw DataError("no studies");
  for (const auto& s : studies)
    if (s.total() <= 0) throw DataError("study '" + s.study_id + "' has no individuals");
  return studies;
}

std::vector<AggregatedStudy> parse_aggregated(const std::filesystem::path& path, std::span<const TestDefinition> tests) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file " + path.string());
  return parse_aggregated(in, tests);
}

void write_aggregated(std::ostream& out, std::span<const AggregatedStudy> studies, std::span<const TestDefinition> tests) {
  out << "study_id";
  for (const auto& t : tests) out << ',' << t.label;
  out << ",count\n";
  for (const auto& s : studies) {
    for (const auto& [p, c] : s.counts) {
      out << s.study_id;
      for (std::size_t t = 0; t < tests.size(); ++t) out << ',' << p[t] + tests[t].file_offset();
      out << ',' << c << '\n';
    }
  }
}

MetaDataset expand_to_individuals(std::span<const AggregatedStudy> aggregated, std::span<const TestDefinition> tests) {
  std::vector<StudyData> studies;
  for (const auto& a : aggregated) {
    StudyData s{a.study_id, {}};
    for (const auto& [pattern, count] : a.counts) {
      if (pattern.size() != tests.size())
        throw DataError("study '" + a.study_id + "': pattern arity does not match the number of tests");
      if (count < 0) throw DataError("study '" + a.study_id + "': negative count");
      s.individuals.insert(s.individuals.end(), static_cast<std::size_t>(count), pattern);
    }
    studies.push_back(std::move(s));
  }
  return MetaDataset({tests.begin(), tests.end()}, std::move(studies));
}

std::vector<AggregatedStudy> aggregate(const MetaDataset& dataset) {
  std::vector<AggregatedStudy> out;
  for (const auto& s : dataset.studies()) {
    AggregatedStudy a{s.study_id, {}};
    for (const auto& y : s.individuals) ++a.counts[y];
    out.push_back(std::move(a));
  }
  return out;
}

void write_expanded(std::ostream& out, const MetaDataset& dataset) {
  const auto tests = dataset.tests();
  out << "study_id,individual_id";
  for (const auto& t : tests) out << ',' << t.label;
  out << '\n';
  for (const auto& s : dataset.studies()) {
    for (std::size_t n = 0; n < s.individuals.size(); ++n) {
      out << s.study_id << ',' << n + 1;
      for (std::size_t t = 0; t < tests.size(); ++t) out << ',' << s.individuals[n][t] + tests[t].file_offset();
      out << '\n';
    }
  }
}

DichotomiseResult dichotomise(const MetaDataset& dataset, std::size_t test, int cut) {
  if (test >= dataset.num_tests()) throw DataError("dichotomise: no such test");
  const auto& def = dataset.tests()[test];
  if (!def.is_ordinal())
    return {dataset, "test '" + def.label + "' is already dichotomous; dichotomisation skipped"};
  if (cut < 1 || cut > def.num_categories - 1)
    throw DataError("dichotomise: cut must be between 1 and " + std::to_string(def.num_categories - 1));
  std::vector<TestDefinition> tests(dataset.tests().begin(), dataset.tests().end());
  tests[test] = TestDefinition::dichotomous(def.label);
  std::vector<StudyData> studies(dataset.studies().begin(), dataset.studies().end());
  for (auto& s : studies)
    for (auto& y : s.individuals) y[test] = y[test] >= cut ? 1 : 0;
  return {MetaDataset(std::move(tests), std::move(studies)), std::nullopt};
}

std::size_t find_test(std::span<const TestDefinition> tests, const std::string& name) {
  for (std::size_t t = 0; t < tests.size(); ++t)
    if (lower(tests[t].label) == lower(name)) return t;
  if (!name.empty() && std::all_of(name.begin(), name.end(), [](unsigned char c) { return std::isdigit(c); })) {
    const auto idx = std::stoul(name);
    if (idx >= 1 && idx <= tests.size()) return idx - 1;
  }
  throw DataError("unknown test '" + name + "'");
}

}  // namespace mvplc
