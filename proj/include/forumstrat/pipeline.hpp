#pragma once

// End-to-end experiment: ingest, project, centrality, distribution,
// stratified samples, holdout per sample, population-wide predictions,
// classifier agreement and a disagreement sample. Every artifact lands in
// one directory next to the config that produced it and a digest manifest.

#include <openssl/evp.h>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "forumstrat/centrality.hpp"
#include "forumstrat/classifier.hpp"
#include "forumstrat/csv.hpp"
#include "forumstrat/error.hpp"
#include "forumstrat/features.hpp"
#include "forumstrat/graph.hpp"
#include "forumstrat/scheme.hpp"
#include "forumstrat/stats.hpp"
#include "forumstrat/strata.hpp"
#include "forumstrat/synth.hpp"

namespace forumstrat {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// File helpers shared with the command-line tool

inline std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw DataError("sha256 digest failed");
  }
  std::ostringstream s;
  for (unsigned i = 0; i < len; ++i) s << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return s.str();
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open '" + p.string() + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_file(const fs::path& p, std::string_view data) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw DataError("cannot write '" + p.string() + "'");
}

/// A JSON-lines corpus, or a graph snapshot written by graph_to_json.
inline GraphSnapshot load_graph(const fs::path& p, bool skip_malformed = false) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open '" + p.string() + "'");
  if (p.extension() == ".json") {
    try {
      return graph_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("graph snapshot '" + p.string() + "': " + e.what());
    }
  }
  return GraphSnapshot{ingest(in, {skip_malformed}).graph, std::nullopt};
}

/// `post_id,class` CSV as a map.
inline std::map<std::string, std::string> read_label_map(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open '" + p.string() + "'");
  std::map<std::string, std::string> out;
  for (auto& r : read_predictions(in)) out.emplace(std::move(r.post_id), std::move(r.label));
  return out;
}

inline void write_sample_csv(std::ostream& out, const StratifiedSample& s) {
  csv::write_row(out, {"post_id", "member_id", "bin", "reused"});
  for (const auto& e : s.entries) {
    csv::write_row(out, {e.post_id, e.member_id, std::to_string(e.bin), e.reused ? "1" : "0"});
  }
}

struct SampleRow {
  std::string post_id;
  std::size_t bin = 0;
};

inline std::vector<SampleRow> read_sample_csv(std::istream& in) {
  auto t = csv::read_table(in, {"post_id", "member_id", "bin"});
  std::size_t pid = 0, bin = 0;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (t.header[i] == "post_id") pid = i;
    if (t.header[i] == "bin") bin = i;
  }
  std::vector<SampleRow> out;
  for (const auto& r : t.rows) {
    try {
      out.push_back({r[pid], static_cast<std::size_t>(std::stoul(r[bin]))});
    } catch (const std::exception&) {
      throw DataError("sample CSV: bad bin '" + r[bin] + "'");
    }
  }
  return out;
}

inline void write_centrality_csv(std::ostream& out, const PopulationGraph& pop, const CentralityVector& cv) {
  csv::write_row(out, {"member_id", std::string(to_string(cv.metric))});
  std::ostringstream v;
  v << std::setprecision(17);
  for (std::size_t i = 0; i < cv.values.size(); ++i) {
    v.str("");
    v << cv.values[i];
    csv::write_row(out, {pop.member_id(i), v.str()});
  }
}

/// Labeled documents for sampled posts; every post must have a label that
/// the scheme knows.
inline std::vector<Document> labeled_documents(const PopulationGraph& pop, std::span<const std::uint32_t> posts,
                                               const std::map<std::string, std::string>& labels,
                                               const CodingScheme& scheme) {
  std::vector<Document> docs;
  docs.reserve(posts.size());
  for (auto p : posts) {
    const auto& id = pop.post(p).post_id;
    auto it = labels.find(id);
    if (it == labels.end()) throw DataError("no label for sampled post '" + id + "'");
    docs.push_back(compose_document(pop, p, scheme.index_of(it->second)));
  }
  return docs;
}

/// Fits the vector space on every document, oversamples, trains.
struct FittedModel {
  VectorSpace space;
  LinearModel model;
};

inline FittedModel fit_model(std::span<const Document> docs, std::span<const int> classes,
                             const VectorizerConfig& vc, std::size_t smote_k, const TrainConfig& tc,
                             std::uint64_t seed) {
  auto [space, m] = fit_transform(docs, vc);
  std::set<int> present(m.labels.begin(), m.labels.end());
  std::vector<int> fit_classes;
  for (int c : classes) {
    if (present.contains(c)) fit_classes.push_back(c);
  }
  auto over = oversample(m, {smote_k, derive_seed(seed, 0x5e7e), true}).matrix;
  auto model = train(over, tc, fit_classes);
  model.vocabulary_hash = space.vocabulary_hash();
  return {std::move(space), std::move(model)};
}

// ---------------------------------------------------------------------------
// Configuration

struct PipelineConfig {
  std::optional<std::string> corpus;
  std::optional<SynthConfig> synth;
  std::optional<std::string> labels;
  std::optional<std::string> scheme;
  SelectionRule rule;
  Metric metric = Metric::PostDegree;
  CentralityOptions centrality;
  std::uint64_t sample_size = 1500;
  std::vector<Strategy> strategies{Strategy::Proportional, Strategy::Uniform};
  std::uint64_t sample_seed = 1;
  std::optional<std::string> reuse_pool;
  std::optional<std::uint64_t> max_new_posts;
  /// "bins" or "class"
  std::string stratify = "bins";
  std::vector<std::uint64_t> seeds;
  double split = 0.8;
  VectorizerConfig vectorizer;
  std::size_t smote_k = 5;
  TrainConfig train;
  double z = kDefaultZ;
  std::size_t disagreement_per_class = 100;
  std::uint64_t disagreement_seed = 1;
};

inline std::vector<std::uint64_t> default_seeds(std::size_t n) {
  std::vector<std::uint64_t> s;
  for (std::size_t i = 1; i <= n; ++i) s.push_back(i);
  return s;
}

inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  try {
    if (j.contains("corpus")) c.corpus = j.at("corpus").get<std::string>();
    if (j.contains("synth")) c.synth = synth_config_from_json(j.at("synth"));
    if (c.corpus.has_value() == c.synth.has_value()) {
      throw ValidationError("config: give exactly one of \"corpus\" and \"synth\"");
    }
    if (j.contains("labels")) c.labels = j.at("labels").get<std::string>();
    if (!c.labels && !c.synth) throw ValidationError("config: \"labels\" is required with a corpus");
    if (j.contains("scheme")) c.scheme = j.at("scheme").get<std::string>();
    if (j.contains("rule")) c.rule = rule_from_json(j.at("rule"));
    if (j.contains("metric")) c.metric = parse_metric(j.at("metric").get<std::string>());
    if (j.contains("eigen")) {
      const auto& e = j.at("eigen");
      c.centrality.eigen.tol = e.value("tol", c.centrality.eigen.tol);
      c.centrality.eigen.max_iter = e.value("max_iter", c.centrality.eigen.max_iter);
    }
    c.centrality.node_limit = j.value("betweenness_node_limit", c.centrality.node_limit);
    if (j.contains("sample")) {
      const auto& s = j.at("sample");
      c.sample_size = s.value("size", c.sample_size);
      if (s.contains("strategies")) {
        c.strategies.clear();
        for (const auto& x : s.at("strategies")) c.strategies.push_back(parse_strategy(x.get<std::string>()));
      }
      c.sample_seed = s.value("seed", c.sample_seed);
      if (s.contains("reuse_pool")) c.reuse_pool = s.at("reuse_pool").get<std::string>();
      if (s.contains("max_new_posts")) c.max_new_posts = s.at("max_new_posts").get<std::uint64_t>();
    }
    if (j.contains("holdout")) {
      const auto& h = j.at("holdout");
      if (h.contains("seeds")) {
        if (h.at("seeds").is_number()) c.seeds = default_seeds(h.at("seeds").get<std::size_t>());
        else c.seeds = h.at("seeds").get<std::vector<std::uint64_t>>();
      }
      c.split = h.value("split", c.split);
      c.stratify = h.value("stratify", c.stratify);
    }
    if (c.seeds.empty()) c.seeds = default_seeds(30);
    if (c.stratify != "bins" && c.stratify != "class") {
      throw ValidationError("config: holdout.stratify must be \"bins\" or \"class\"");
    }
    if (j.contains("vectorizer")) {
      const auto& v = j.at("vectorizer");
      c.vectorizer.min_df = v.value("min_df", c.vectorizer.min_df);
      if (v.contains("max_features") && !v.at("max_features").is_null()) {
        c.vectorizer.max_features = v.at("max_features").get<std::size_t>();
      }
    }
    c.smote_k = j.value("smote_k", c.smote_k);
    if (j.contains("classifier")) c.train = train_config_from_json(j.at("classifier"));
    c.z = j.value("z", c.z);
    if (j.contains("disagreement")) {
      c.disagreement_per_class = j.at("disagreement").value("per_class", c.disagreement_per_class);
      c.disagreement_seed = j.at("disagreement").value("seed", c.disagreement_seed);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  if (c.strategies.empty()) throw ValidationError("config: no sampling strategies");
  if (c.sample_size == 0) throw ValidationError("config: sample.size must be > 0");
  return c;
}

inline nlohmann::json to_json(const PipelineConfig& c) {
  nlohmann::json j;
  if (c.corpus) j["corpus"] = *c.corpus;
  if (c.synth) j["synth"] = to_json(*c.synth);
  if (c.labels) j["labels"] = *c.labels;
  if (c.scheme) j["scheme"] = *c.scheme;
  j["rule"] = rule_to_json(c.rule);
  j["metric"] = to_string(c.metric);
  j["eigen"] = {{"tol", c.centrality.eigen.tol}, {"max_iter", c.centrality.eigen.max_iter}};
  j["betweenness_node_limit"] = c.centrality.node_limit;
  nlohmann::json strategies = nlohmann::json::array();
  for (auto s : c.strategies) strategies.push_back(to_string(s));
  j["sample"] = {{"size", c.sample_size}, {"strategies", strategies}, {"seed", c.sample_seed}};
  if (c.reuse_pool) j["sample"]["reuse_pool"] = *c.reuse_pool;
  if (c.max_new_posts) j["sample"]["max_new_posts"] = *c.max_new_posts;
  j["holdout"] = {{"seeds", c.seeds}, {"split", c.split}, {"stratify", c.stratify}};
  j["vectorizer"] = {{"min_df", c.vectorizer.min_df},
                     {"max_features", c.vectorizer.max_features ? nlohmann::json(*c.vectorizer.max_features)
                                                                : nlohmann::json(nullptr)}};
  j["smote_k"] = c.smote_k;
  j["classifier"] = to_json(c.train);
  j["z"] = c.z;
  j["disagreement"] = {{"per_class", c.disagreement_per_class}, {"seed", c.disagreement_seed}};
  return j;
}

// ---------------------------------------------------------------------------
// Run

/// A stage failed; artifacts of earlier stages stay on disk.
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& cause)
      : Error(cause.kind(), "stage '" + stage + "' failed: " + cause.what()), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct ExperimentResult {
  fs::path out_dir;
  std::vector<std::string> stages;
  std::map<Strategy, StratifiedSample> samples;
  std::map<Strategy, HoldoutSummary> summaries;
  std::map<Strategy, std::vector<int>> population_predictions;
  std::optional<AgreementReport> agreement;
  std::optional<DisagreementSample> disagreement;
  std::vector<std::string> class_ids;
  std::vector<std::string> population_post_ids;
};

namespace detail {

class RunRecorder {
 public:
  explicit RunRecorder(fs::path dir) : dir_(std::move(dir)) {}

  /// `shown` is the path as written in the config.
  void input(const std::string& shown, const fs::path& p) { inputs_.emplace_back(shown, sha256_hex(read_file(p))); }

  void output(const std::string& name, std::string_view data) {
    write_file(dir_ / name, data);
    outputs_[name] = sha256_hex(data);
  }

  void stage_done(const std::string& s) { stages_.push_back(s); }

  void write_manifest(const std::optional<std::string>& failed = std::nullopt) const {
    nlohmann::json j;
    nlohmann::json in = nlohmann::json::array();
    for (const auto& [p, d] : inputs_) in.push_back({{"path", p}, {"sha256", d}});
    nlohmann::json out = nlohmann::json::array();
    for (const auto& [p, d] : outputs_) out.push_back({{"path", p}, {"sha256", d}});
    j["inputs"] = in;
    j["outputs"] = out;
    j["stages_completed"] = stages_;
    j["status"] = failed ? "failed" : "ok";
    if (failed) j["failed_stage"] = *failed;
    write_file(dir_ / "manifest.json", j.dump(2) + "\n");
  }

  const std::vector<std::string>& stages() const { return stages_; }

 private:
  fs::path dir_;
  std::vector<std::pair<std::string, std::string>> inputs_;
  std::map<std::string, std::string> outputs_;
  std::vector<std::string> stages_;
};

template <class F>
auto run_stage(RunRecorder& rec, const std::string& name, F&& f) {
  try {
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      rec.stage_done(name);
    } else {
      auto r = f();
      rec.stage_done(name);
      return r;
    }
  } catch (const Error& e) {
    rec.write_manifest(name);
    throw StageError(name, e);
  } catch (const std::exception& e) {
    rec.write_manifest(name);
    throw StageError(name, DataError(e.what()));
  }
}

inline std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

}  // namespace detail

/// Relative paths in the config resolve against `base_dir`.
inline ExperimentResult run_experiment(const nlohmann::json& config_json, const fs::path& out_dir,
                                       const fs::path& base_dir = fs::current_path()) {
  const auto cfg = pipeline_config_from_json(config_json);
  fs::create_directories(out_dir);
  detail::RunRecorder rec(out_dir);
  ExperimentResult res;
  res.out_dir = out_dir;
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base_dir / p; };

  rec.output("config.json", detail::dump(to_json(cfg)));

  const CodingScheme scheme = cfg.scheme ? CodingScheme::from_file(resolve(*cfg.scheme).string()) : default_scheme();
  res.class_ids = scheme.class_ids();
  std::vector<int> classes;
  for (std::size_t i = 0; i < res.class_ids.size(); ++i) classes.push_back(static_cast<int>(i));

  std::map<std::string, std::string> labels;
  auto graph = detail::run_stage(rec, "ingest", [&] {
    std::shared_ptr<const ForumGraph> g;
    if (cfg.synth) {
      auto corpus = generate(*cfg.synth);
      std::ostringstream jl, tr;
      write_jsonl(jl, corpus.records);
      write_truth(tr, corpus);
      rec.output("corpus.jsonl", jl.str());
      rec.output("truth.csv", tr.str());
      g = std::make_shared<const ForumGraph>(ingest_records(corpus.records));
      for (auto& [p, c] : corpus.truth) labels.emplace(p, c);
    } else {
      rec.input(*cfg.corpus, resolve(*cfg.corpus));
      g = std::make_shared<const ForumGraph>(load_graph(resolve(*cfg.corpus)).graph);
    }
    if (cfg.labels) {
      rec.input(*cfg.labels, resolve(*cfg.labels));
      labels = read_label_map(resolve(*cfg.labels));
    }
    return g;
  });

  auto pop = detail::run_stage(rec, "project", [&] {
    auto p = project(graph, cfg.rule);
    std::ostringstream s;
    print_stats_table(s, describe(cfg.rule), stats(p));
    rec.output("population.txt", s.str());
    return p;
  });

  auto cv = detail::run_stage(rec, "centrality", [&] {
    auto v = compute_centrality(pop, cfg.metric, cfg.centrality);
    std::ostringstream s;
    write_centrality_csv(s, pop, v);
    rec.output("centrality.csv", s.str());
    return v;
  });

  auto dist = detail::run_stage(rec, "distribution", [&] {
    auto d = merge_bins(induce(pop, cv), cfg.sample_size);
    rec.output("distribution.json", detail::dump(distribution_to_json(d)));
    return d;
  });

  std::map<std::string, std::string> reuse;
  if (cfg.reuse_pool) {
    rec.input(*cfg.reuse_pool, resolve(*cfg.reuse_pool));
    reuse = read_label_map(resolve(*cfg.reuse_pool));
  }

  detail::run_stage(rec, "sample", [&] {
    for (auto st : cfg.strategies) {
      SampleSpec spec{st, cfg.sample_size, reuse, cfg.max_new_posts, cfg.sample_seed};
      auto s = sample(pop, dist, spec);
      std::ostringstream out;
      write_sample_csv(out, s);
      rec.output("sample_" + std::string(to_string(st)) + ".csv", out.str());
      res.samples.emplace(st, std::move(s));
    }
  });

  std::map<Strategy, std::vector<Document>> sample_docs;
  detail::run_stage(rec, "labels", [&] {
    for (const auto& [st, s] : res.samples) {
      std::vector<std::uint32_t> posts;
      for (const auto& e : s.entries) posts.push_back(e.post);
      // Reused posts carry their pool label; it takes precedence.
      auto merged = labels;
      for (const auto& [p, l] : reuse) merged[p] = l;
      sample_docs.emplace(st, labeled_documents(pop, posts, merged, scheme));
    }
  });

  detail::run_stage(rec, "holdout", [&] {
    HoldoutConfig hc{cfg.seeds, cfg.split, cfg.vectorizer, cfg.smote_k, true, cfg.train};
    for (const auto& [st, s] : res.samples) {
      const auto& docs = sample_docs.at(st);
      std::vector<int> strata;
      if (cfg.stratify == "bins") {
        for (const auto& e : s.entries) strata.push_back(static_cast<int>(e.bin));
      } else {
        strata = class_strata(docs);
      }
      auto runs = repeated_holdout(docs, classes, strata, hc);
      auto summary = aggregate(runs);
      nlohmann::json j;
      j["strategy"] = to_string(st);
      j["summary"] = to_json(summary, res.class_ids);
      nlohmann::json rj = nlohmann::json::array();
      for (const auto& r : runs) {
        auto e = to_json(r.report, res.class_ids);
        e["seed"] = r.seed;
        e["train_size"] = r.train_idx.size();
        e["test_size"] = r.test_idx.size();
        e["vocabulary_size"] = r.space.size();
        rj.push_back(std::move(e));
      }
      j["runs"] = rj;
      rec.output("holdout_" + std::string(to_string(st)) + ".json", detail::dump(j));
      res.summaries.emplace(st, std::move(summary));
    }
  });

  detail::run_stage(rec, "predict", [&] {
    std::vector<Document> all;
    all.reserve(pop.post_count());
    for (std::size_t p = 0; p < pop.post_count(); ++p) {
      all.push_back(compose_document(pop, p));
      res.population_post_ids.push_back(all.back().post_id);
    }
    const auto tokens = preprocess_all(all, StopWords{});
    for (const auto& [st, s] : res.samples) {
      const auto name = std::string(to_string(st));
      auto fm = fit_model(sample_docs.at(st), classes, cfg.vectorizer, cfg.smote_k, cfg.train, cfg.sample_seed);
      std::ostringstream model_out;
      save_model(model_out, fm.model);
      rec.output("model_" + name + ".bin", model_out.str());
      rec.output("vector_space_" + name + ".json", detail::dump(fm.space.to_json()));
      auto pred = predict(fm.model, transform_tokens(fm.space, tokens, all));
      std::ostringstream p;
      csv::write_row(p, {"post_id", "class"});
      for (std::size_t i = 0; i < pred.labels.size(); ++i) {
        csv::write_row(p, {res.population_post_ids[i], res.class_ids[static_cast<std::size_t>(pred.labels[i])]});
      }
      rec.output("predictions_" + name + ".csv", p.str());
      res.population_predictions.emplace(st, std::move(pred.labels));
    }
  });

  if (res.population_predictions.size() >= 2) {
    detail::run_stage(rec, "agreement", [&] {
      const auto sa = cfg.strategies[0], sb = cfg.strategies[1];
      const auto& a = res.population_predictions.at(sa);
      const auto& b = res.population_predictions.at(sb);
      auto rep = agreement(a, b, classes, cfg.z);
      rec.output("agreement.json", detail::dump(to_json(rep, res.class_ids)));
      std::ostringstream t;
      print_agreement_table(t, rep, res.class_ids, std::string(to_string(sa)), std::string(to_string(sb)));
      rec.output("agreement.txt", t.str());
      auto ds = disagreement_sample(a, b, classes, cfg.disagreement_per_class, cfg.disagreement_seed);
      std::ostringstream d;
      csv::write_row(d, {"post_id", "class", std::string(to_string(sa)), std::string(to_string(sb))});
      for (const auto& [c, idx] : ds.per_class) {
        for (auto i : idx) {
          csv::write_row(d, {res.population_post_ids[i], res.class_ids[static_cast<std::size_t>(c)],
                             res.class_ids[static_cast<std::size_t>(a[i])],
                             res.class_ids[static_cast<std::size_t>(b[i])]});
        }
      }
      rec.output("disagreement_sample.csv", d.str());
      res.agreement = std::move(rep);
      res.disagreement = std::move(ds);
    });
  }

  detail::run_stage(rec, "report", [&] {
    std::ostringstream r;
    r << "Population\n";
    print_stats_table(r, describe(cfg.rule), stats(pop));
    r << "\nHoldout (" << cfg.seeds.size() << " seeds, geometric mean)\n";
    std::vector<std::pair<std::string, EvalReport>> reps;
    for (const auto& [st, s] : res.summaries) reps.emplace_back(std::string(to_string(st)), summary_report(s));
    print_eval_table(r, reps, res.class_ids);
    if (res.agreement) {
      r << "\nAgreement (z = " << cfg.z << ")\n";
      print_agreement_table(r, *res.agreement, res.class_ids, std::string(to_string(cfg.strategies[0])),
                            std::string(to_string(cfg.strategies[1])));
    }
    rec.output("report.txt", r.str());
  });

  res.stages = rec.stages();
  rec.write_manifest();
  return res;
}

}  // namespace forumstrat
