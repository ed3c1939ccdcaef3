#ifndef MVPLC_DATA_HPP
#define MVPLC_DATA_HPP

// Datasets of cross-classified test results.
//
// Categories are coded 0..K_t-1 in memory. On disk (aggregated CSV and the
// expanded debug CSV) dichotomous results are 0/1 and ordinal results are
// 1..K_t, so ordinal codes carry a fixed offset of one.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvplc {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class TestKind { dichotomous, ordinal };

struct TestDefinition {
  std::string label;
  TestKind kind = TestKind::dichotomous;
  int num_categories = 2;

  static TestDefinition dichotomous(std::string label) { return {std::move(label), TestKind::dichotomous, 2}; }
  static TestDefinition ordinal(std::string label, int k) { return {std::move(label), TestKind::ordinal, k}; }

  bool is_ordinal() const { return kind == TestKind::ordinal; }
  void validate() const;

  /// Offset between the on-disk code and the in-memory category.
  int file_offset() const { return is_ordinal() ? 1 : 0; }
};

using Pattern = std::vector<int>;

struct StudyData {
  std::string study_id;
  std::vector<Pattern> individuals;
};

class MetaDataset {
 public:
  MetaDataset(std::vector<TestDefinition> tests, std::vector<StudyData> studies);

  std::span<const TestDefinition> tests() const { return tests_; }
  std::span<const StudyData> studies() const { return studies_; }
  std::size_t num_tests() const { return tests_.size(); }
  std::size_t num_studies() const { return studies_.size(); }
  std::size_t num_individuals() const;
  std::size_t num_patterns() const;  // prod K_t

 private:
  std::vector<TestDefinition> tests_;
  std::vector<StudyData> studies_;
};

struct AggregatedStudy {
  std::string study_id;
  std::map<Pattern, long> counts;

  long total() const;
};

/// Reads the test metadata file: {"tests": [{"label": .., "kind": "dichotomous"|"ordinal", "categories": K}]}.
std::vector<TestDefinition> read_test_metadata(const std::filesystem::path& path);
std::vector<TestDefinition> parse_test_metadata(const std::string& json_text);
std::string test_metadata_json(std::span<const TestDefinition> tests);

/// Aggregated CSV: header, then rows `study_id, t1_cat, ..., tT_cat, count`.
/// Errors carry the offending line number.
std::vector<AggregatedStudy> parse_aggregated(std::istream& in, std::span<const TestDefinition> tests);
std::vector<AggregatedStudy> parse_aggregated(const std::filesystem::path& path, std::span<const TestDefinition> tests);
void write_aggregated(std::ostream& out, std::span<const AggregatedStudy> studies, std::span<const TestDefinition> tests);

MetaDataset expand_to_individuals(std::span<const AggregatedStudy> aggregated, std::span<const TestDefinition> tests);
std::vector<AggregatedStudy> aggregate(const MetaDataset& dataset);

/// Long format `study_id, individual_id, t1, ..., tT`, file coding.
void write_expanded(std::ostream& out, const MetaDataset& dataset);

struct DichotomiseResult {
  MetaDataset dataset;
  std::optional<std::string> warning;
};

/// Categories < cut map to 0, >= cut map to 1; 1 <= cut <= K_t - 1.
DichotomiseResult dichotomise(const MetaDataset& dataset, std::size_t test, int cut);

/// Resolves a test by label (case-insensitive) or by 1-based index.
std::size_t find_test(std::span<const TestDefinition> tests, const std::string& name);

}  // namespace mvplc

#endif  // MVPLC_DATA_HPP
