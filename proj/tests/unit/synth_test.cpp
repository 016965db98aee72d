#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "../common/oracles.hpp"
#include "forumstrat/centrality.hpp"
#include "forumstrat/scheme.hpp"
#include "forumstrat/strata.hpp"
#include "forumstrat/synth.hpp"

using namespace forumstrat;

TEST(Synth, TailIndexNearConfiguredExponent) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    SynthConfig c;
    c.n_members = 1000;
    c.activity_exponent = 2.0;
    c.seed = seed;
    auto corpus = generate(c);
    EXPECT_NEAR(oracle::power_law_mle(corpus.member_posts), 2.0, 0.3) << seed;
  }
}

TEST(Synth, MemberPostsMatchRecords) {
  SynthConfig c;
  c.n_members = 300;
  auto corpus = generate(c);
  std::map<std::string, std::uint32_t> counted;
  for (const auto& r : corpus.records) ++counted[r.member_id];
  for (std::size_t m = 0; m < corpus.member_posts.size(); ++m) {
    EXPECT_EQ(counted["u" + std::to_string(m)], corpus.member_posts[m]);
  }
}

TEST(Synth, SingleClassMix) {
  SynthConfig c;
  c.n_members = 200;
  c.class_mix = {{"not_criminal", 1.0}};
  auto corpus = generate(c);
  for (const auto& [id, cls] : corpus.truth) EXPECT_EQ(cls, "not_criminal");
}

TEST(Synth, FixedSeedIsByteIdentical) {
  SynthConfig c;
  c.n_members = 300;
  auto dump = [&] {
    auto corpus = generate(c);
    std::ostringstream out;
    write_jsonl(out, corpus.records);
    write_truth(out, corpus);
    return out.str();
  };
  const auto a = dump();
  EXPECT_EQ(a, dump());
  c.seed = 2;
  EXPECT_NE(a, dump());
}

TEST(Synth, RecordsSurviveIngestion) {
  SynthConfig c;
  c.n_members = 200;
  auto corpus = generate(c);
  std::ostringstream out;
  write_jsonl(out, corpus.records);
  std::istringstream in(out.str());
  auto g = ingest(in).graph;
  ASSERT_EQ(g.posts().size(), corpus.records.size());
  for (std::uint32_t p = 0; p < g.posts().size(); ++p) {
    EXPECT_EQ(g.posts()[p].post_id, corpus.truth[p].first);
    EXPECT_EQ(g.posts()[p].content, corpus.records[p].content);
  }
}

TEST(Synth, InfeasibleMixIsAnError) {
  SynthConfig c;
  c.n_members = 20;
  c.max_posts_per_member = 2;
  c.class_mix = {{"not_criminal", 0.999}, {"spam", 0.001}};
  EXPECT_THROW(generate(c), InfeasibleError);
}

TEST(Synth, InvalidConfigsRejected) {
  SynthConfig c;
  c.activity_exponent = 1.0;
  EXPECT_THROW(generate(c), ValidationError);
  SynthConfig d;
  d.class_mix = {{"a", 0.5}, {"b", 0.4}};
  EXPECT_THROW(generate(d), ValidationError);
}

TEST(Synth, ConfigJsonRoundTrip) {
  SynthConfig c;
  c.n_members = 1234;
  c.class_mix = {{"x", 0.25}, {"y", 0.75}};
  c.class_centrality_bias = {{"y", 2.5}};
  c.seed = 77;
  auto back = synth_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  auto obj = synth_config_from_json({{"class_mix", {{"x", 0.5}, {"y", 0.5}}}});
  EXPECT_EQ(obj.class_mix.size(), 2u);
}

TEST(Synth, BiasedClassPrevalenceRisesWithActivityBin) {
  // Pooled over 10 seeds: prevalence of each biased class per post-degree bin.
  const std::vector<std::string> rare{"access_to_system", "bots_malware", "trading_credentials"};
  std::map<std::string, std::vector<double>> hits;
  std::vector<double> totals;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SynthConfig c;
    c.n_members = 3000;
    c.activity_exponent = 2.0;
    c.seed = seed;
    for (const auto& r : rare) c.class_centrality_bias[r] = 4.0;
    auto corpus = generate(c);
    auto pop = project(ingest_records(corpus.records), {});
    auto dist = induce(pop, post_degree(pop));
    if (totals.size() < dist.bins.size()) totals.resize(dist.bins.size(), 0.0);
    for (const auto& r : rare) {
      if (hits[r].size() < dist.bins.size()) hits[r].resize(dist.bins.size(), 0.0);
    }
    for (std::size_t b = 0; b < dist.bins.size(); ++b) {
      for (auto p : dist.bins[b].posts) {
        totals[b] += 1.0;
        const auto& cls = corpus.truth[pop.post_base_index(p)].second;
        if (hits.contains(cls)) hits[cls][b] += 1.0;
      }
    }
  }
  for (const auto& r : rare) {
    for (std::size_t b = 1; b < totals.size(); ++b) {
      EXPECT_GE(hits[r][b] / totals[b], hits[r][b - 1] / totals[b - 1]) << r << " bin " << b;
    }
  }
}

TEST(Scheme, DefaultHasSevenClasses) {
  auto s = default_scheme();
  EXPECT_EQ(s.size(), 7u);
  EXPECT_EQ(s.class_ids().front(), "not_criminal");
  for (const auto& c : s.classes()) {
    EXPECT_FALSE(c.name.empty());
    EXPECT_FALSE(c.description.empty());
  }
}

TEST(Scheme, MergeMapFoldsRareClasses) {
  auto s = default_scheme().with_merges({{"ddos_booting", "not_criminal"}, {"spam", "not_criminal"}});
  EXPECT_EQ(s.size(), 5u);
  EXPECT_EQ(s.resolve("spam"), "not_criminal");
  EXPECT_EQ(s.index_of("ddos_booting"), s.index_of("not_criminal"));
  EXPECT_TRUE(s.known("spam"));
  EXPECT_THROW(s.resolve("pizza"), Error);
  auto back = CodingScheme::from_json(s.to_json());
  EXPECT_EQ(back.class_ids(), s.class_ids());
}

TEST(Scheme, InvalidSchemesRejected) {
  EXPECT_THROW(CodingScheme({{"a", "A", "", ""}, {"a", "A2", "", ""}}, {}), ValidationError);
  EXPECT_THROW(CodingScheme({{"a", "A", "", ""}}, {{"a", "nowhere"}}), ValidationError);
  EXPECT_THROW(CodingScheme({{"a", "A", "", ""}, {"b", "B", "", ""}}, {{"a", "b"}, {"b", "a"}}), ValidationError);
}
