#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "forumstrat/pipeline.hpp"
#include "../common/support.hpp"

using namespace forumstrat;
using nlohmann::json;

namespace {

json small_config() {
  return {{"synth", {{"n_members", 1500}, {"n_threads", 150}, {"seed", 5}, {"signal_fraction", 0.5}}},
          {"sample", {{"size", 300}, {"strategies", {"proportional", "uniform"}}, {"seed", 9}}},
          {"holdout", {{"seeds", 3}}},
          {"classifier", {{"epochs", 5}}},
          {"disagreement", {{"per_class", 5}, {"seed", 2}}}};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// One full run shared by the tests below; it takes a few seconds.
const ExperimentResult& shared_run() {
  static const ExperimentResult r = run_experiment(small_config(), testsupport::temp_dir("pipe_main"));
  return r;
}

}  // namespace

TEST(Pipeline, RunsEveryStage) {
  const auto& r = shared_run();
  EXPECT_EQ(r.stages, (std::vector<std::string>{"ingest", "project", "centrality", "distribution", "sample", "labels",
                                                "holdout", "predict", "agreement", "report"}));
  ASSERT_EQ(r.samples.size(), 2u);
  for (const auto& [st, s] : r.samples) EXPECT_EQ(s.entries.size(), 300u);
  for (const auto* f : {"config.json", "corpus.jsonl", "truth.csv", "population.txt", "centrality.csv",
                        "distribution.json", "sample_proportional.csv", "sample_uniform.csv", "holdout_uniform.json",
                        "model_uniform.bin", "predictions_proportional.csv", "agreement.json",
                        "disagreement_sample.csv", "report.txt", "manifest.json"}) {
    EXPECT_TRUE(std::filesystem::exists(r.out_dir / f)) << f;
  }
  auto manifest = json::parse(slurp(r.out_dir / "manifest.json"));
  EXPECT_EQ(manifest["status"], "ok");
  for (const auto& o : manifest["outputs"]) {
    EXPECT_EQ(o["sha256"], sha256_hex(slurp(r.out_dir / o["path"].get<std::string>()))) << o["path"];
  }
  ASSERT_TRUE(r.agreement);
  EXPECT_EQ(r.agreement->n_posts, r.population_post_ids.size());
}

TEST(Pipeline, MatchesStagesRunByHand) {
  const auto& r = shared_run();
  SynthConfig sc;
  sc.n_members = 1500;
  sc.n_threads = 150;
  sc.seed = 5;
  sc.signal_fraction = 0.5;
  auto corpus = generate(sc);
  auto pop = project(ingest_records(corpus.records), {});
  auto cv = compute_centrality(pop, Metric::PostDegree, {});
  std::ostringstream cen;
  write_centrality_csv(cen, pop, cv);
  EXPECT_EQ(cen.str(), slurp(r.out_dir / "centrality.csv"));

  auto dist = merge_bins(induce(pop, cv), 300);
  for (auto st : {Strategy::Proportional, Strategy::Uniform}) {
    auto s = sample(pop, dist, {st, 300, {}, std::nullopt, 9});
    std::ostringstream out;
    write_sample_csv(out, s);
    EXPECT_EQ(out.str(), slurp(r.out_dir / ("sample_" + std::string(to_string(st)) + ".csv")));
  }

  std::istringstream in(slurp(r.out_dir / "sample_uniform.csv"));
  auto rows = read_sample_csv(in);
  ASSERT_EQ(rows.size(), 300u);
  EXPECT_EQ(rows[0].post_id, r.samples.at(Strategy::Uniform).entries[0].post_id);
}

TEST(Pipeline, ArchivedConfigReproducesRun) {
  const auto& r = shared_run();
  const auto archived = json::parse(slurp(r.out_dir / "config.json"));
  auto dir = testsupport::temp_dir("pipe_rerun");
  run_experiment(archived, dir);
  EXPECT_EQ(slurp(dir / "manifest.json"), slurp(r.out_dir / "manifest.json"));
  for (const auto* f : {"sample_proportional.csv", "sample_uniform.csv", "model_proportional.bin", "report.txt",
                        "holdout_proportional.json", "disagreement_sample.csv"}) {
    EXPECT_EQ(slurp(dir / f), slurp(r.out_dir / f)) << f;
  }
}

TEST(Pipeline, FailedStageIsNamedAndEarlierArtifactsKept) {
  auto cfg = small_config();
  cfg["sample"]["max_new_posts"] = 10;
  auto dir = testsupport::temp_dir("pipe_fail");
  try {
    run_experiment(cfg, dir);
    FAIL() << "expected StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "sample");
    EXPECT_NE(std::string(e.what()).find("stage 'sample' failed"), std::string::npos);
  }
  auto manifest = json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(manifest["status"], "failed");
  EXPECT_EQ(manifest["failed_stage"], "sample");
  EXPECT_EQ(manifest["stages_completed"].size(), 4u);
  EXPECT_TRUE(std::filesystem::exists(dir / "distribution.json"));
  EXPECT_FALSE(std::filesystem::exists(dir / "report.txt"));
}

TEST(Pipeline, CorpusInputsAreDigested) {
  auto dir = testsupport::temp_dir("pipe_corpus");
  SynthConfig sc;
  sc.n_members = 1200;
  sc.seed = 3;
  auto corpus = generate(sc);
  {
    std::ofstream c(dir / "posts.jsonl");
    write_jsonl(c, corpus.records);
    std::ofstream l(dir / "labels.csv");
    csv::write_row(l, {"post_id", "class"});
    for (const auto& [p, k] : corpus.truth) csv::write_row(l, {p, k});
  }
  json cfg{{"corpus", "posts.jsonl"},
           {"labels", "labels.csv"},
           {"sample", {{"size", 200}, {"strategies", {"uniform"}}}},
           {"holdout", {{"seeds", 2}}},
           {"classifier", {{"epochs", 3}}}};
  auto r = run_experiment(cfg, dir / "out", dir);
  EXPECT_FALSE(r.agreement);
  auto manifest = json::parse(slurp(dir / "out" / "manifest.json"));
  ASSERT_EQ(manifest["inputs"].size(), 2u);
  EXPECT_EQ(manifest["inputs"][0]["path"], "posts.jsonl");
  EXPECT_EQ(manifest["inputs"][0]["sha256"], sha256_hex(slurp(dir / "posts.jsonl")));
}

TEST(Pipeline, ConfigValidation) {
  EXPECT_THROW(pipeline_config_from_json(json::object()), ValidationError);
  EXPECT_THROW(pipeline_config_from_json({{"corpus", "a"}}), ValidationError);
  EXPECT_THROW(pipeline_config_from_json({{"synth", json::object()}, {"holdout", {{"stratify", "random"}}}}),
               ValidationError);
  EXPECT_THROW(pipeline_config_from_json({{"synth", json::object()}, {"sample", {{"strategies", {"bogus"}}}}}),
               ValidationError);
  auto c = pipeline_config_from_json({{"synth", json::object()}});
  EXPECT_EQ(c.seeds.size(), 30u);
  EXPECT_EQ(c.sample_size, 1500u);
  EXPECT_EQ(pipeline_config_from_json(to_json(c)).seeds, c.seeds);
}

TEST(Pipeline, Sha256KnownAnswer) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
