#include <sstream>

#include "doctest.h"
#include "mvplc/data.hpp"

using namespace mvplc;

namespace {

const char* kTable1 =
    "study_id,US,DD,Wells,count\n"
    "1,0,0,1,32\n1,0,0,2,20\n1,0,0,3,5\n1,0,1,1,8\n1,0,1,2,18\n1,0,1,3,2\n"
    "1,1,0,1,0\n1,1,0,2,0\n1,1,0,3,2\n1,1,1,1,1\n1,1,1,2,6\n1,1,1,3,8\n"
    "11,0,0,1,243\n11,0,0,2,16\n11,0,0,3,3\n11,0,1,1,233\n11,0,1,2,104\n11,0,1,3,29\n"
    "11,1,0,1,1\n11,1,0,2,0\n11,1,0,3,0\n11,1,1,1,28\n11,1,1,2,117\n11,1,1,3,109\n";

std::vector<TestDefinition> tests() {
  return parse_test_metadata(R"({"tests": [{"label": "US", "kind": "dichotomous"},
      {"label": "DD", "kind": "dichotomous"}, {"label": "Wells", "kind": "ordinal", "categories": 3}]})");
}

}  // namespace

TEST_CASE("table rows ingest to the published study sizes") {
  std::istringstream in(kTable1);
  const auto t = tests();
  const auto studies = parse_aggregated(in, t);
  REQUIRE(studies.size() == 2);
  CHECK(studies[0].study_id == "1");
  CHECK(studies[0].total() == 102);
  CHECK(studies[1].total() == 883);
  const MetaDataset data = expand_to_individuals(studies, t);
  CHECK(data.num_individuals() == 985);
  CHECK(data.studies()[0].individuals.size() == 102);
  CHECK(data.num_patterns() == 12);
}

TEST_CASE("aggregate and expand round trip losslessly") {
  std::istringstream in(kTable1);
  const auto t = tests();
  const auto studies = parse_aggregated(in, t);
  const auto again = aggregate(expand_to_individuals(studies, t));
  REQUIRE(again.size() == studies.size());
  for (std::size_t s = 0; s < studies.size(); ++s) {
    CHECK(again[s].study_id == studies[s].study_id);
    // Zero-count cells may be dropped; every positive count must survive.
    for (const auto& [p, n] : studies[s].counts) {
      const auto it = again[s].counts.find(p);
      CHECK((it == again[s].counts.end() ? 0L : it->second) == n);
    }
  }
  std::ostringstream out;
  write_aggregated(out, again, t);
  std::istringstream back(out.str());
  const auto reread = parse_aggregated(back, t);
  CHECK(reread[1].total() == 883);
}

TEST_CASE("parse errors") {
  const auto t = tests();
  std::istringstream empty("");
  CHECK_THROWS_WITH_AS(parse_aggregated(empty, t), "no studies", DataError);
  std::istringstream bad("study_id,US,DD,Wells,count\n1,0,0,4,3\n");
  CHECK_THROWS_AS(parse_aggregated(bad, t), DataError);
  std::istringstream neg("study_id,US,DD,Wells,count\n1,0,0,1,-3\n");
  CHECK_THROWS_AS(parse_aggregated(neg, t), DataError);
  std::istringstream dup("study_id,US,DD,Wells,count\n1,0,0,1,3\n1,0,0,1,2\n");
  CHECK_THROWS_AS(parse_aggregated(dup, t), DataError);
  CHECK_THROWS_AS(parse_test_metadata(R"({"tests": [{"label": "A", "kind": "dichotomous", "cats": 2}]})"), DataError);
}

TEST_CASE("a pattern with count three expands to three identical rows") {
  const std::vector<TestDefinition> t = {TestDefinition::dichotomous("A")};
  std::istringstream in("study_id,A,count\nx,1,3\nx,0,0\n");
  const auto data = expand_to_individuals(parse_aggregated(in, t), t);
  REQUIRE(data.studies()[0].individuals.size() == 3);
  for (const auto& y : data.studies()[0].individuals) CHECK(y == Pattern{1});
}

TEST_CASE("dichotomising the ordinal test") {
  std::istringstream in(kTable1);
  const auto t = tests();
  const MetaDataset data = expand_to_individuals(parse_aggregated(in, t), t);
  const std::size_t wells = find_test(data.tests(), "wells");
  CHECK(wells == 2);
  CHECK(find_test(data.tests(), "3") == 2);
  CHECK_THROWS(find_test(data.tests(), "CT"));
  for (int k : {1, 2}) {
    const auto r = dichotomise(data, wells, k);
    CHECK(!r.dataset.tests()[2].is_ordinal());
    CHECK(r.dataset.num_individuals() == 985);
    CHECK(r.dataset.studies()[0].individuals.size() == 102);
    // Category codes 0, 1, 2 map to {0,1,1} for k = 1 and {0,0,1} for k = 2.
    for (std::size_t i = 0; i < data.studies()[0].individuals.size(); ++i) {
      const int c = data.studies()[0].individuals[i][2];
      CHECK(r.dataset.studies()[0].individuals[i][2] == (c >= k ? 1 : 0));
    }
  }
  CHECK_THROWS(dichotomise(data, wells, 3));
  const auto skipped = dichotomise(data, 0, 1);
  CHECK(skipped.warning.has_value());
  CHECK(skipped.dataset.studies()[1].individuals == data.studies()[1].individuals);
}
