#include "edm/ingest.hpp"

#include <gtest/gtest.h>

#include <sstream>

#include "edm/annotations.hpp"

namespace {

edm::ParseResult csv(const std::string& text, edm::ParseMode mode = edm::ParseMode::strict) {
  std::istringstream in(text);
  return edm::parse_csv(in, {.mode = mode});
}

edm::ParseResult jsonl(const std::string& text, edm::ParseMode mode = edm::ParseMode::strict) {
  std::istringstream in(text);
  return edm::parse_jsonl(in, {.mode = mode});
}

TEST(ParseTime, EpochAndIso8601) {
  EXPECT_EQ(edm::parse_time("1700000000"), 1700000000.0);
  EXPECT_EQ(edm::parse_time(" 12.5 "), 12.5);
  EXPECT_EQ(edm::parse_time("1970-01-02"), 86400.0);
  EXPECT_EQ(edm::parse_time("2023-11-14T22:13:20Z"), 1700000000.0);
  EXPECT_EQ(edm::parse_time("2023-11-14 22:13:20"), 1700000000.0);
  EXPECT_EQ(edm::parse_time("2023-11-15T00:13:20+02:00"), 1700000000.0);
  EXPECT_EQ(edm::parse_time("2023-11-14T21:13:20-0100"), 1700000000.0);
  EXPECT_DOUBLE_EQ(*edm::parse_time("2023-11-14T22:13:20.25Z"), 1700000000.25);
  EXPECT_FALSE(edm::parse_time("2023-02-30"));
  EXPECT_FALSE(edm::parse_time("yesterday"));
  EXPECT_FALSE(edm::parse_time(""));
  EXPECT_FALSE(edm::parse_time("2023-11-14T25:00"));
}

TEST(ParseCsv, MinimalFile) {
  const auto r = csv("time,value\n1,3.5\n2,3.6");
  ASSERT_EQ(r.records.size(), 2u);
  EXPECT_EQ(r.records[0].timestamp, 1.0);
  EXPECT_EQ(r.records[1].value, 3.6);
  EXPECT_EQ(r.records[0].test, "default");
  EXPECT_EQ(r.records[0].metric, "value");
  EXPECT_TRUE(r.issues.empty());
}

TEST(ParseCsv, EmptyFileIsEmpty) {
  EXPECT_TRUE(csv("").records.empty());
  EXPECT_TRUE(csv("\n\n").records.empty());
}

TEST(ParseCsv, NaNInStrictModeNamesLine) {
  try {
    csv("time,value\n1,NaN\n");
    FAIL() << "expected ParseError";
  } catch (const edm::ParseError& e) {
    EXPECT_EQ(e.issue().line, 2u);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(ParseCsv, LenientSkipsAndCounts) {
  const auto r = csv("time,value\n1,1.0\n2,abc\n3\nnope,4\n5,inf\n6,6.0\n", edm::ParseMode::lenient);
  ASSERT_EQ(r.records.size(), 2u);
  EXPECT_EQ(r.records[1].value, 6.0);
  ASSERT_EQ(r.issues.size(), 4u);
  EXPECT_EQ(r.issues[0].line, 3u);
  EXPECT_EQ(r.issues[1].line, 4u);
  EXPECT_EQ(r.issues[2].line, 5u);
  EXPECT_EQ(r.issues[3].line, 6u);
}

TEST(ParseCsv, MissingColumn) {
  EXPECT_THROW(csv("time,val\n1,2\n"), edm::ParseError);
  EXPECT_THROW(csv("value\n2\n"), edm::ParseError);
}

TEST(ParseCsv, SeriesColumnsAndAttributes) {
  const auto r = csv(
      "test,metric,time,value,commit,note\n"
      "write,p99,2024-01-01,10,abc,\"hello, world\"\n"
      "write,p50,2024-01-01,4,abc,\n"
      "read,p99,2024-01-02,7,def,\"say \"\"hi\"\"\"\n");
  ASSERT_EQ(r.records.size(), 3u);
  EXPECT_EQ(r.records[0].test, "write");
  EXPECT_EQ(r.records[0].metric, "p99");
  EXPECT_EQ(r.records[0].attributes.at("commit"), "abc");
  EXPECT_EQ(r.records[0].attributes.at("note"), "hello, world");
  EXPECT_EQ(r.records[1].attributes.count("note"), 0u);
  EXPECT_EQ(r.records[2].attributes.at("note"), "say \"hi\"");

  const auto grouped = edm::group_series(r.records);
  ASSERT_EQ(grouped.size(), 3u);
  EXPECT_EQ(grouped.at({"write", "p99"}).values, std::vector<double>{10});
  EXPECT_EQ(grouped.at({"read", "p99"}).attributes.size(), 1u);
}

TEST(ParseCsv, DuplicatePointIsAnIssue) {
  EXPECT_THROW(csv("time,value\n1,1\n1,2\n"), edm::ParseError);
  EXPECT_EQ(csv("time,value\n1,1\n1,2\n", edm::ParseMode::lenient).records.size(), 1u);
  EXPECT_EQ(csv("test,time,value\na,1,1\nb,1,2\n").records.size(), 2u);
}

TEST(ParseCsv, CrLfAndBom) {
  const auto r = csv("\xEF\xBB\xBFtime,value\r\n1,2\r\n");
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].value, 2.0);
}

TEST(ParseJsonl, RecordsAndAttributes) {
  const auto r = jsonl(
      R"({"time": 1, "value": 2.5, "test": "t", "metric": "m", "attributes": {"commit": "abc", "run": 3}})"
      "\n\n"
      R"({"time": "1970-01-01T00:00:02Z", "value": 3, "branch": "main"})");
  ASSERT_EQ(r.records.size(), 2u);
  EXPECT_EQ(r.records[0].test, "t");
  EXPECT_EQ(r.records[0].attributes.at("commit"), "abc");
  EXPECT_EQ(r.records[0].attributes.at("run"), "3");
  EXPECT_EQ(r.records[1].timestamp, 2.0);
  EXPECT_EQ(r.records[1].test, "default");
  EXPECT_EQ(r.records[1].attributes.at("branch"), "main");
}

TEST(ParseJsonl, Errors) {
  EXPECT_THROW(jsonl("{\"time\": 1}\n"), edm::ParseError);
  EXPECT_THROW(jsonl("{\"time\": 1, \"value\": \"x\"}\n"), edm::ParseError);
  EXPECT_THROW(jsonl("not json\n"), edm::ParseError);
  const auto r = jsonl("{\"value\": 1}\n{\"time\": 2, \"value\": 1}\n[1]\n", edm::ParseMode::lenient);
  EXPECT_EQ(r.records.size(), 1u);
  ASSERT_EQ(r.issues.size(), 2u);
  EXPECT_EQ(r.issues[0].line, 1u);
  EXPECT_EQ(r.issues[1].line, 3u);
}

edm::ChangePoint at(double time, double before, double after) {
  edm::ChangePoint cp;
  cp.time = time;
  cp.mean_before = before;
  cp.mean_after = after;
  cp.magnitude = after / before - 1.0;
  cp.p_value = 0.001;
  return cp;
}

TEST(Annotations, Empty) { EXPECT_EQ(edm::export_annotations({}).dump(), "[]"); }

TEST(Annotations, EpochMillisecondsAndTags) {
  const auto a = edm::export_annotations({at(1700000000.0, 10.0, 12.0)}, "write", "p99");
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0]["time"].get<std::int64_t>(), 1700000000000);
  EXPECT_NE(a[0]["text"].get<std::string>().find("+20.00%"), std::string::npos);
  const auto tags = a[0]["tags"].get<std::vector<std::string>>();
  EXPECT_EQ(tags, (std::vector<std::string>{"change-point", "increase", "write", "p99"}));
}

TEST(Annotations, Chronological) {
  const auto a = edm::export_annotations({at(1700000500.0, 5.0, 4.0), at(1700000000.0, 4.0, 5.0)});
  ASSERT_EQ(a.size(), 2u);
  EXPECT_LT(a[0]["time"].get<std::int64_t>(), a[1]["time"].get<std::int64_t>());
  EXPECT_EQ(a[1]["tags"][1], "decrease");
}

}  // namespace
