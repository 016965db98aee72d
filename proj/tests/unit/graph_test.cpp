#include <gtest/gtest.h>

#include <map>
#include <set>
#include <sstream>

#include "forumstrat/graph.hpp"
#include "../common/support.hpp"

using namespace forumstrat;
using testsupport::rec;

namespace {

std::string jsonl(const std::vector<PostRecord>& rs) {
  std::ostringstream out;
  write_jsonl(out, rs);
  return out.str();
}

}  // namespace

TEST(Ingest, EmptyStreamGivesEmptyGraph) {
  std::istringstream in("");
  auto r = ingest(in);
  EXPECT_EQ(r.graph.node_count(), 0u);
  EXPECT_TRUE(r.graph.posts().empty());
  EXPECT_TRUE(r.graph.interactions().empty());
}

TEST(Ingest, SingleRecord) {
  std::istringstream in(jsonl({rec("t", "m", "p1")}));
  auto g = ingest(in).graph;
  EXPECT_EQ(g.node_count(), 4u);
  ASSERT_EQ(g.posts().size(), 1u);
  ASSERT_EQ(g.interactions().size(), 1u);
  EXPECT_EQ(g.interactions()[0].weight, 1u);
}

TEST(Ingest, MalformedLineReportsLineNumber) {
  std::istringstream in(jsonl({rec("t", "m", "p1")}) + "{not json\n");
  try {
    ingest(in);
    FAIL() << "expected IngestError";
  } catch (const IngestError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Ingest, SkipMalformedKeepsGoodLines) {
  std::istringstream in("{\"forum\": 1}\n" + jsonl({rec("t", "m", "p1"), rec("t", "m", "p2")}));
  auto r = ingest(in, {true});
  EXPECT_EQ(r.graph.posts().size(), 2u);
  ASSERT_EQ(r.skipped.size(), 1u);
  EXPECT_EQ(r.skipped[0].line(), 1u);
}

TEST(Ingest, DuplicatePostIdNamesTheId) {
  std::istringstream in(jsonl({rec("t", "m", "dup7"), rec("t", "m2", "dup7")}));
  try {
    ingest(in);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("dup7"), std::string::npos);
  }
}

TEST(Ingest, BadTimestampRejected) {
  std::istringstream in(
      R"({"forum":"f","board":"b","thread_id":"t","thread_title":"x","member_id":"m","post_id":"p",)"
      R"("content":"c","post_type":"offer","timestamp":"yesterday"})"
      "\n");
  EXPECT_THROW(ingest(in), IngestError);
}

TEST(Interact, ThreePostsOneThread) {
  auto g = ingest_records(std::vector{rec("t", "m", "1"), rec("t", "m", "2"), rec("t", "m", "3")});
  ASSERT_EQ(g.interactions().size(), 1u);
  EXPECT_EQ(g.interactions()[0].weight, 3u);
}

TEST(Interact, TwoThreads) {
  auto g = ingest_records(std::vector{rec("t1", "m", "1"), rec("t2", "m", "2"), rec("t2", "m", "3")});
  ASSERT_EQ(g.interactions().size(), 2u);
  std::map<std::string, std::uint32_t> w;
  for (const auto& e : g.interactions()) w[g.threads()[e.thread].id] = e.weight;
  EXPECT_EQ(w["t1"], 1u);
  EXPECT_EQ(w["t2"], 2u);
}

TEST(Interact, MatchesNestedLoopCountAndIsIdempotent) {
  const auto records = testsupport::random_records(11, 200, 30, 25);
  auto g = ingest_records(records);
  // Oracle: for every (member, thread) pair, scan all records.
  std::set<std::string> members, threads;
  for (const auto& r : records) {
    members.insert(r.member_id);
    threads.insert(r.thread_id);
  }
  std::map<std::pair<std::string, std::string>, std::uint32_t> expect;
  for (const auto& m : members) {
    for (const auto& t : threads) {
      std::uint32_t n = 0;
      for (const auto& r : records) n += (r.member_id == m && r.thread_id == t) ? 1 : 0;
      if (n) expect[{m, t}] = n;
    }
  }
  std::map<std::pair<std::string, std::string>, std::uint32_t> got;
  std::uint64_t total = 0;
  for (const auto& e : g.interactions()) {
    got[{g.members()[e.member].id, g.threads()[e.thread].id}] = e.weight;
    total += e.weight;
  }
  EXPECT_EQ(got, expect);
  EXPECT_EQ(total, g.posts().size());

  auto again = build_interact(g);
  EXPECT_TRUE(std::equal(again.interactions().begin(), again.interactions().end(), g.interactions().begin(),
                         g.interactions().end()));
}

TEST(Project, IdentityRuleKeepsEverything) {
  const auto records = testsupport::random_records(3, 150, 20, 10);
  auto g = ingest_records(records);
  auto pop = project(g, SelectionRule{});
  EXPECT_EQ(pop.post_count(), g.posts().size());
  EXPECT_EQ(pop.member_count(), g.members().size());
  EXPECT_EQ(pop.thread_count(), g.threads().size());
  EXPECT_EQ(pop.interact_count(), g.interactions().size());
}

TEST(Project, CutoffMatchesLinearScan) {
  const auto records = testsupport::random_records(5, 300, 40, 30);
  SelectionRule rule;
  rule.cutoff = records[150].timestamp;
  auto pop = project(ingest_records(records), rule);
  std::vector<std::string> expect;
  for (const auto& r : records) {
    if (r.timestamp <= *rule.cutoff) expect.push_back(r.post_id);
  }
  std::vector<std::string> got;
  for (std::size_t p = 0; p < pop.post_count(); ++p) got.push_back(pop.post(p).post_id);
  EXPECT_EQ(got, expect);
}

TEST(Project, TradingTypesDropOther) {
  const auto records = testsupport::random_records(8, 300, 40, 30);
  SelectionRule rule;
  rule.post_types = {PostType::Offer, PostType::Request, PostType::Exchange, PostType::Tutorial};
  auto pop = project(ingest_records(records), rule);
  std::size_t expect = 0;
  for (const auto& r : records) expect += parse_post_type(r.post_type) != PostType::Other;
  EXPECT_EQ(pop.post_count(), expect);
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < pop.member_count(); ++i) {
    for (auto w : pop.row_weights(i)) total += w;
  }
  EXPECT_EQ(total, pop.post_count());
}

TEST(Project, EmptyPopulationIsAnError) {
  SelectionRule rule;
  rule.boards = std::set<std::string>{"no such board"};
  EXPECT_THROW(project(ingest_records(std::vector{rec("t", "m", "1")}), rule), Error);
}

TEST(Project, Idempotent) {
  const auto records = testsupport::random_records(9, 300, 40, 30);
  SelectionRule rule;
  rule.boards = std::set<std::string>{"b0", "b1"};
  auto once = project(ingest_records(records), rule);
  auto twice = project(once.as_graph(), rule);
  ASSERT_EQ(once.member_count(), twice.member_count());
  ASSERT_EQ(once.thread_count(), twice.thread_count());
  for (std::size_t i = 0; i < once.member_count(); ++i) {
    EXPECT_EQ(once.member_id(i), twice.member_id(i));
    auto a = once.row_threads(i), b = twice.row_threads(i);
    ASSERT_TRUE(std::equal(a.begin(), a.end(), b.begin(), b.end()));
    auto wa = once.row_weights(i), wb = twice.row_weights(i);
    ASSERT_TRUE(std::equal(wa.begin(), wa.end(), wb.begin(), wb.end()));
  }
}

TEST(ExcludeMember, SoleMemberLeavesNoPosts) {
  auto g = exclude_member(ingest_records(std::vector{rec("t", "m", "1"), rec("t", "m", "2")}), "m");
  EXPECT_TRUE(g.posts().empty());
  EXPECT_TRUE(g.interactions().empty());
}

TEST(ExcludeMember, OutlierDropsItsPostCount) {
  auto records = testsupport::random_records(13, 400, 50, 20);
  // m0 has the largest weight in random_records, the "admin" outlier.
  std::size_t own = 0;
  for (const auto& r : records) own += r.member_id == "m0";
  auto g = ingest_records(records);
  auto h = exclude_member(g, "m0");
  EXPECT_EQ(h.posts().size(), g.posts().size() - own);
  EXPECT_FALSE(h.find_member("m0"));
}

TEST(ExcludeMember, UnknownMemberIsNotFound) {
  EXPECT_THROW(exclude_member(ingest_records(std::vector{rec("t", "m", "1")}), "ghost"), NotFoundError);
}

TEST(ExcludeMember, MemberOutsidePopulationLeavesProjectionUnchanged) {
  auto records = testsupport::random_records(17, 200, 20, 10);
  records.push_back(rec("tx", "late", "late1", "x", "offer", 100000));
  SelectionRule rule;
  rule.cutoff = records[199].timestamp;
  auto g = ingest_records(records);
  auto a = project(g, rule);
  auto b = project(exclude_member(g, "late"), rule);
  EXPECT_EQ(a.post_count(), b.post_count());
  EXPECT_EQ(a.member_count(), b.member_count());
  EXPECT_EQ(a.interact_count(), b.interact_count());
}

TEST(Snapshot, RoundTripPreservesGraphAndRule) {
  const auto records = testsupport::random_records(21, 120, 15, 10);
  auto g = ingest_records(records);
  SelectionRule rule;
  rule.post_types = {PostType::Offer};
  rule.cutoff = records[60].timestamp;
  auto snap = graph_from_json(nlohmann::json::parse(graph_to_json(g, rule).dump()));
  ASSERT_TRUE(snap.rule);
  EXPECT_EQ(*snap.rule, rule);
  ASSERT_EQ(snap.graph.posts().size(), g.posts().size());
  for (std::uint32_t p = 0; p < g.posts().size(); ++p) {
    EXPECT_EQ(record_to_json(snap.graph.record(p)), record_to_json(g.record(p)));
  }
  EXPECT_TRUE(std::equal(snap.graph.interactions().begin(), snap.graph.interactions().end(),
                         g.interactions().begin(), g.interactions().end()));
}

TEST(Snapshot, WrongSchemaVersionRejected) {
  auto j = graph_to_json(ingest_records(std::vector{rec("t", "m", "1")}));
  j["schema_version"] = 99;
  EXPECT_THROW(graph_from_json(j), Error);
}

TEST(Time, Rfc3339RoundTripAndOffsets) {
  auto t = parse_rfc3339("2021-03-04T05:06:07.25+01:30");
  ASSERT_TRUE(t);
  EXPECT_EQ(format_rfc3339(*t), "2021-03-04T03:36:07.250000Z");
  EXPECT_EQ(parse_rfc3339("2021-03-04T03:36:07.25Z"), t);
  EXPECT_FALSE(parse_rfc3339("2021-13-04T00:00:00Z"));
  EXPECT_FALSE(parse_rfc3339("2021-03-04"));
}
