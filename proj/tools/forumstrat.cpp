// forumstrat: command-line front end for the stratified-sampling toolkit.
//
// Exit codes: 0 success, 2 invalid input or arguments, 3 data error.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "forumstrat/forumstrat.hpp"

namespace fsx = forumstrat;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitData = 3;

std::ostream& open_out(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  file.open(path, std::ios::binary | std::ios::trunc);
  if (!file) throw fsx::DataError("cannot write '" + path + "'");
  return file;
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw fsx::DataError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw fsx::ValidationError("'" + path + "' is not valid JSON: " + e.what());
  }
}

fsx::CodingScheme load_scheme(const std::string& path) {
  return path.empty() ? fsx::default_scheme() : fsx::CodingScheme::from_file(path);
}

struct PopulationArgs {
  std::string graph;
  std::string rule;
};

void add_population_args(CLI::App* cmd, PopulationArgs& a) {
  cmd->add_option("-g,--graph", a.graph, "Corpus (.jsonl) or graph snapshot (.json)")->required();
  cmd->add_option("-r,--rule", a.rule, "Selection rule JSON; defaults to the snapshot's rule or all posts");
}

fsx::PopulationGraph load_population(const PopulationArgs& a) {
  auto snap = fsx::load_graph(a.graph);
  fsx::SelectionRule rule;
  if (!a.rule.empty()) rule = fsx::rule_from_json(read_json(a.rule));
  else if (snap.rule) rule = *snap.rule;
  return fsx::project(std::make_shared<const fsx::ForumGraph>(std::move(snap.graph)), rule);
}

struct CentralityArgs {
  std::string metric = "post";
  double tol = 1e-7;
  int max_iter = 100;
  std::size_t node_limit = fsx::kDefaultBetweennessNodeLimit;
};

void add_centrality_args(CLI::App* cmd, CentralityArgs& a) {
  cmd->add_option("-m,--metric", a.metric, "post | thread | eigenvector | betweenness")->capture_default_str();
  cmd->add_option("--tol", a.tol, "Eigenvector convergence tolerance")->capture_default_str();
  cmd->add_option("--max-iter", a.max_iter, "Eigenvector iteration cap")->capture_default_str();
  cmd->add_option("--node-limit", a.node_limit, "Largest graph for exact betweenness")->capture_default_str();
}

fsx::CentralityVector centrality_of(const fsx::PopulationGraph& pop, const CentralityArgs& a) {
  fsx::CentralityOptions o;
  o.eigen.tol = a.tol;
  o.eigen.max_iter = a.max_iter;
  o.node_limit = a.node_limit;
  auto cv = fsx::compute_centrality(pop, fsx::parse_metric(a.metric), o);
  if (cv.meta && !cv.meta->converged) {
    std::cerr << "warning: eigenvector iteration did not converge (residual " << cv.meta->residual << " after "
              << cv.meta->iterations << " iterations)\n";
  }
  return cv;
}

struct ModelArgs {
  std::string loss = "hinge";
  double lambda = 1e-4;
  int epochs = 20;
  double lr = 0.1;
  std::uint64_t seed = 0;
  std::uint32_t min_df = 2;
  std::size_t max_features = 0;
  std::size_t smote_k = 5;
};

void add_model_args(CLI::App* cmd, ModelArgs& a) {
  cmd->add_option("--loss", a.loss, "hinge | logistic")->capture_default_str();
  cmd->add_option("--lambda", a.lambda, "L2 regularization")->capture_default_str();
  cmd->add_option("--epochs", a.epochs)->capture_default_str();
  cmd->add_option("--lr", a.lr, "Initial learning rate, decayed as 1/epoch")->capture_default_str();
  cmd->add_option("--train-seed", a.seed)->capture_default_str();
  cmd->add_option("--min-df", a.min_df, "Minimum document frequency of a term")->capture_default_str();
  cmd->add_option("--max-features", a.max_features, "Vocabulary cap (0 = none)")->capture_default_str();
  cmd->add_option("--smote-k", a.smote_k, "Neighbours for oversampling")->capture_default_str();
}

fsx::TrainConfig train_config(const ModelArgs& a) {
  return fsx::train_config_from_json(
      {{"loss", a.loss}, {"lambda", a.lambda}, {"epochs", a.epochs}, {"learning_rate", a.lr}, {"seed", a.seed}});
}

fsx::VectorizerConfig vectorizer_config(const ModelArgs& a) {
  fsx::VectorizerConfig v;
  v.min_df = a.min_df;
  if (a.max_features) v.max_features = a.max_features;
  return v;
}

/// Sampled posts of `sample_csv` (all population posts when empty).
std::vector<std::uint32_t> sample_posts(const fsx::PopulationGraph& pop, const std::string& sample_csv,
                                        std::vector<int>* bins = nullptr) {
  std::unordered_map<std::string, std::uint32_t> index;
  for (std::uint32_t p = 0; p < pop.post_count(); ++p) index.emplace(pop.post(p).post_id, p);
  std::ifstream in(sample_csv);
  if (!in) throw fsx::DataError("cannot open '" + sample_csv + "'");
  std::vector<std::uint32_t> out;
  for (const auto& r : fsx::read_sample_csv(in)) {
    auto it = index.find(r.post_id);
    if (it == index.end()) throw fsx::DataError("sampled post '" + r.post_id + "' is not in the population");
    out.push_back(it->second);
    if (bins) bins->push_back(static_cast<int>(r.bin));
  }
  return out;
}

std::vector<fsx::LabeledPost> read_prediction_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw fsx::DataError("cannot open '" + path + "'");
  return fsx::read_predictions(in);
}

volatile std::sig_atomic_t g_stop = 0;
httplib::Server* g_server = nullptr;

void on_signal(int) {
  g_stop = 1;
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Forum graph centrality, stratified sampling and text classification toolkit"};
  app.require_subcommand(1);

  // ingest
  std::string ingest_in, ingest_out;
  bool skip_malformed = false;
  auto* ingest = app.add_subcommand("ingest", "Build a forum graph from JSON-lines post records");
  ingest->add_option("-i,--input", ingest_in, "JSON-lines corpus")->required();
  ingest->add_option("-o,--out", ingest_out, "Graph snapshot (.json)")->required();
  ingest->add_flag("--skip-malformed", skip_malformed, "Skip bad lines instead of failing");
  ingest->callback([&] {
    std::ifstream in(ingest_in);
    if (!in) throw fsx::DataError("cannot open '" + ingest_in + "'");
    auto r = fsx::ingest(in, {skip_malformed});
    std::ofstream f;
    open_out(ingest_out, f) << fsx::graph_to_json(r.graph).dump() << '\n';
    fsx::print_stats_table(std::cout, "All posts", fsx::stats(r.graph));
    if (!r.skipped.empty()) std::cerr << "skipped " << r.skipped.size() << " malformed line(s)\n";
  });

  // stats
  PopulationArgs stats_pop;
  auto* stats = app.add_subcommand("stats", "Node and edge counts of a population");
  add_population_args(stats, stats_pop);
  stats->callback([&] {
    auto pop = load_population(stats_pop);
    fsx::print_stats_table(std::cout, fsx::describe(pop.rule()), fsx::stats(pop));
  });

  // project
  PopulationArgs proj_pop;
  std::string proj_out;
  auto* proj = app.add_subcommand("project", "Apply a selection rule and write the population graph");
  add_population_args(proj, proj_pop);
  proj->add_option("-o,--out", proj_out, "Population snapshot (.json)")->required();
  proj->callback([&] {
    auto pop = load_population(proj_pop);
    std::ofstream f;
    open_out(proj_out, f) << fsx::graph_to_json(pop.as_graph(), pop.rule()).dump() << '\n';
    fsx::print_stats_table(std::cout, fsx::describe(pop.rule()), fsx::stats(pop));
  });

  // centrality
  PopulationArgs cen_pop;
  CentralityArgs cen_args;
  std::string cen_out;
  auto* cen = app.add_subcommand("centrality", "Per-member centrality over the population");
  add_population_args(cen, cen_pop);
  add_centrality_args(cen, cen_args);
  cen->add_option("-o,--out", cen_out, "CSV member_id,value (default stdout)");
  cen->callback([&] {
    auto pop = load_population(cen_pop);
    auto cv = centrality_of(pop, cen_args);
    std::ofstream f;
    fsx::write_centrality_csv(open_out(cen_out, f), pop, cv);
  });

  // distribution
  PopulationArgs dist_pop;
  CentralityArgs dist_cen;
  std::uint64_t dist_size = 1500;
  std::string dist_out;
  auto* dist = app.add_subcommand("distribution", "Induced post distribution over log-10 centrality bins");
  add_population_args(dist, dist_pop);
  add_centrality_args(dist, dist_cen);
  dist->add_option("-s,--size", dist_size, "Planned sample size; bins below 25/size are merged")->capture_default_str();
  dist->add_option("-o,--out", dist_out, "Distribution JSON (default stdout)");
  dist->callback([&] {
    auto pop = load_population(dist_pop);
    auto d = fsx::merge_bins(fsx::induce(pop, centrality_of(pop, dist_cen)), dist_size);
    std::ofstream f;
    open_out(dist_out, f) << fsx::distribution_to_json(d).dump(2) << '\n';
  });

  // sample
  PopulationArgs smp_pop;
  CentralityArgs smp_cen;
  std::uint64_t smp_size = 1500, smp_seed = 1, smp_max_new = 0;
  std::string smp_strategy = "proportional", smp_reuse, smp_out;
  auto* smp = app.add_subcommand("sample", "Draw a proportional or uniform stratified sample");
  add_population_args(smp, smp_pop);
  add_centrality_args(smp, smp_cen);
  smp->add_option("-s,--size", smp_size)->capture_default_str();
  smp->add_option("--strategy", smp_strategy, "proportional | uniform")->capture_default_str();
  smp->add_option("--seed", smp_seed)->capture_default_str();
  smp->add_option("--reuse-pool", smp_reuse, "CSV post_id,class of already annotated posts to include first");
  smp->add_option("--max-new", smp_max_new, "Fail if more than this many new posts are needed (0 = no cap)");
  smp->add_option("-o,--out", smp_out, "Sample CSV (default stdout)");
  smp->callback([&] {
    auto pop = load_population(smp_pop);
    auto d = fsx::merge_bins(fsx::induce(pop, centrality_of(pop, smp_cen)), smp_size);
    fsx::SampleSpec spec;
    spec.strategy = fsx::parse_strategy(smp_strategy);
    spec.size = smp_size;
    spec.seed = smp_seed;
    if (!smp_reuse.empty()) spec.reuse_pool = fsx::read_label_map(smp_reuse);
    if (smp_max_new) spec.max_new_posts = smp_max_new;
    auto s = fsx::sample(pop, d, spec);
    std::ofstream f;
    fsx::write_sample_csv(open_out(smp_out, f), s);
    std::cerr << s.entries.size() << " posts (" << s.reused_count() << " reused) over " << d.bins.size()
              << " bins\n";
  });

  // train
  PopulationArgs tr_pop;
  ModelArgs tr_model;
  std::string tr_sample, tr_labels, tr_scheme, tr_out, tr_space;
  auto* tr = app.add_subcommand("train", "Train a linear classifier on a labeled sample");
  add_population_args(tr, tr_pop);
  add_model_args(tr, tr_model);
  tr->add_option("--sample", tr_sample, "Sample CSV")->required();
  tr->add_option("--labels", tr_labels, "CSV post_id,class")->required();
  tr->add_option("--scheme", tr_scheme, "Coding scheme JSON (default: built-in seven classes)");
  tr->add_option("-o,--out", tr_out, "Model file")->required();
  tr->add_option("--space", tr_space, "Vector space JSON")->required();
  tr->callback([&] {
    auto pop = load_population(tr_pop);
    auto scheme = load_scheme(tr_scheme);
    auto docs = fsx::labeled_documents(pop, sample_posts(pop, tr_sample), fsx::read_label_map(tr_labels), scheme);
    std::vector<int> classes;
    for (std::size_t i = 0; i < scheme.size(); ++i) classes.push_back(static_cast<int>(i));
    auto fm = fsx::fit_model(docs, classes, vectorizer_config(tr_model), tr_model.smote_k, train_config(tr_model),
                             tr_model.seed);
    std::ofstream f, g;
    fsx::save_model(open_out(tr_out, f), fm.model);
    open_out(tr_space, g) << fm.space.to_json().dump() << '\n';
    std::cerr << "trained " << fm.model.classes.size() << " classes over " << fm.space.size() << " terms\n";
  });

  // holdout
  PopulationArgs ho_pop;
  ModelArgs ho_model;
  std::string ho_sample, ho_labels, ho_scheme, ho_out, ho_stratify = "class";
  std::size_t ho_seeds = 30;
  double ho_split = 0.8;
  auto* ho = app.add_subcommand("holdout", "Repeated stratified holdout on a labeled sample");
  add_population_args(ho, ho_pop);
  add_model_args(ho, ho_model);
  ho->add_option("--sample", ho_sample, "Sample CSV")->required();
  ho->add_option("--labels", ho_labels, "CSV post_id,class")->required();
  ho->add_option("--scheme", ho_scheme, "Coding scheme JSON");
  ho->add_option("--seeds", ho_seeds, "Number of seeds (1..n)")->capture_default_str();
  ho->add_option("--split", ho_split, "Training share per stratum")->capture_default_str();
  ho->add_option("--stratify", ho_stratify, "class | bins")->capture_default_str();
  ho->add_option("-o,--out", ho_out, "Report JSON");
  ho->callback([&] {
    if (ho_stratify != "class" && ho_stratify != "bins") throw fsx::ValidationError("--stratify must be class or bins");
    auto pop = load_population(ho_pop);
    auto scheme = load_scheme(ho_scheme);
    std::vector<int> bins;
    auto docs = fsx::labeled_documents(pop, sample_posts(pop, ho_sample, &bins), fsx::read_label_map(ho_labels),
                                       scheme);
    std::vector<int> classes;
    for (std::size_t i = 0; i < scheme.size(); ++i) classes.push_back(static_cast<int>(i));
    fsx::HoldoutConfig hc{fsx::default_seeds(ho_seeds), ho_split, vectorizer_config(ho_model), ho_model.smote_k,
                          true, train_config(ho_model)};
    auto strata = ho_stratify == "bins" ? bins : fsx::class_strata(docs);
    auto runs = fsx::repeated_holdout(docs, classes, strata, hc);
    auto summary = fsx::aggregate(runs);
    const auto names = scheme.class_ids();
    std::vector<std::pair<std::string, fsx::EvalReport>> rep{{"holdout", fsx::summary_report(summary)}};
    fsx::print_eval_table(std::cout, rep, names);
    if (summary.runs_with_zero_predictions) {
      std::cerr << "note: " << summary.runs_with_zero_predictions << " of " << summary.runs
                << " runs left at least one class unpredicted\n";
    }
    if (!ho_out.empty()) {
      json j{{"summary", fsx::to_json(summary, names)}};
      for (const auto& r : runs) {
        auto e = fsx::to_json(r.report, names);
        e["seed"] = r.seed;
        j["runs"].push_back(e);
      }
      std::ofstream f;
      open_out(ho_out, f) << j.dump(2) << '\n';
    }
  });

  // predict
  PopulationArgs pr_pop;
  std::string pr_model, pr_space, pr_scheme, pr_out;
  auto* pr = app.add_subcommand("predict", "Classify every population post");
  add_population_args(pr, pr_pop);
  pr->add_option("--model", pr_model, "Model file")->required();
  pr->add_option("--space", pr_space, "Vector space JSON")->required();
  pr->add_option("--scheme", pr_scheme, "Coding scheme JSON");
  pr->add_option("-o,--out", pr_out, "Predictions CSV post_id,class (default stdout)");
  pr->callback([&] {
    auto pop = load_population(pr_pop);
    auto scheme = load_scheme(pr_scheme);
    auto space = fsx::VectorSpace::from_json(read_json(pr_space));
    std::ifstream min(pr_model, std::ios::binary);
    if (!min) throw fsx::DataError("cannot open '" + pr_model + "'");
    auto model = fsx::load_model(min);
    if (model.vocabulary_hash != space.vocabulary_hash()) {
      throw fsx::ValidationError("model and vector space do not belong together (vocabulary hash mismatch)");
    }
    std::vector<fsx::Document> docs;
    for (std::size_t p = 0; p < pop.post_count(); ++p) docs.push_back(fsx::compose_document(pop, p));
    auto pred = fsx::predict(model, fsx::transform(space, docs));
    const auto names = scheme.class_ids();
    std::vector<fsx::LabeledPost> rows;
    for (std::size_t i = 0; i < docs.size(); ++i) {
      rows.push_back({docs[i].post_id, fsx::class_name(pred.labels[i], names)});
    }
    std::ofstream f;
    fsx::write_predictions(open_out(pr_out, f), rows);
  });

  // agree
  std::string ag_a, ag_b, ag_scheme, ag_out;
  double ag_z = fsx::kDefaultZ;
  auto* ag = app.add_subcommand("agree", "Per-class agreement between two prediction files");
  ag->add_option("-a", ag_a, "Predictions CSV of classifier A")->required();
  ag->add_option("-b", ag_b, "Predictions CSV of classifier B")->required();
  ag->add_option("--scheme", ag_scheme, "Coding scheme JSON");
  ag->add_option("--z", ag_z, "Normal quantile of the interval")->capture_default_str();
  ag->add_option("-o,--out", ag_out, "Agreement JSON");
  ag->callback([&] {
    const auto names = load_scheme(ag_scheme).class_ids();
    auto pa = read_prediction_file(ag_a);
    auto pb = read_prediction_file(ag_b);
    auto al = fsx::align_predictions(pa, pb, names);
    auto rep = fsx::agreement(al.a, al.b, {}, ag_z);
    fsx::print_agreement_table(std::cout, rep, names);
    if (!ag_out.empty()) {
      std::ofstream f;
      open_out(ag_out, f) << fsx::to_json(rep, names).dump(2) << '\n';
    }
  });

  // disagree-sample
  std::string ds_a, ds_b, ds_scheme, ds_out;
  std::size_t ds_per_class = 100;
  std::uint64_t ds_seed = 1;
  auto* ds = app.add_subcommand("disagree-sample", "Draw posts on which two classifiers disagree, per class");
  ds->add_option("-a", ds_a, "Predictions CSV of classifier A")->required();
  ds->add_option("-b", ds_b, "Predictions CSV of classifier B")->required();
  ds->add_option("--scheme", ds_scheme, "Coding scheme JSON");
  ds->add_option("--per-class", ds_per_class)->capture_default_str();
  ds->add_option("--seed", ds_seed)->capture_default_str();
  ds->add_option("-o,--out", ds_out, "CSV post_id,class,a,b (default stdout)");
  ds->callback([&] {
    const auto names = load_scheme(ds_scheme).class_ids();
    auto al = fsx::align_predictions(read_prediction_file(ds_a), read_prediction_file(ds_b), names);
    std::vector<int> classes;
    for (std::size_t i = 0; i < names.size(); ++i) classes.push_back(static_cast<int>(i));
    auto d = fsx::disagreement_sample(al.a, al.b, classes, ds_per_class, ds_seed);
    for (const auto& w : d.warnings) std::cerr << "warning: " << w << '\n';
    std::ofstream f;
    auto& out = open_out(ds_out, f);
    fsx::csv::write_row(out, {"post_id", "class", "a", "b"});
    for (const auto& [c, idx] : d.per_class) {
      for (auto i : idx) {
        fsx::csv::write_row(out, {al.post_ids[i], names[static_cast<std::size_t>(c)],
                                  names[static_cast<std::size_t>(al.a[i])], names[static_cast<std::size_t>(al.b[i])]});
      }
    }
  });

  // annotate-serve
  PopulationArgs an_pop;
  std::string an_sample, an_id = "sample", an_tokens, an_store = "annotation-store", an_scheme, an_ui,
                         an_host = "127.0.0.1";
  int an_port = 8080;
  auto* an = app.add_subcommand("annotate-serve", "Serve a sample to annotators over HTTP");
  add_population_args(an, an_pop);
  an->add_option("--sample", an_sample, "Sample CSV")->required();
  an->add_option("--sample-id", an_id, "Identifier used in the API paths")->capture_default_str();
  an->add_option("--tokens", an_tokens, "JSON {\"annotators\": {\"<id>\": \"<token>\"}}")->required();
  an->add_option("--store", an_store, "Directory for the label journal and snapshots")->capture_default_str();
  an->add_option("--scheme", an_scheme, "Coding scheme JSON");
  an->add_option("--ui", an_ui, "Directory with the UI bundle to serve at /");
  an->add_option("--host", an_host)->capture_default_str();
  an->add_option("--port", an_port)->capture_default_str();
  an->callback([&] {
    auto snap = fsx::load_graph(an_pop.graph);
    std::ifstream in(an_sample);
    if (!in) throw fsx::DataError("cannot open '" + an_sample + "'");
    std::vector<std::string> ids;
    for (const auto& r : fsx::read_sample_csv(in)) ids.push_back(r.post_id);
    auto tokens = fsx::TokenTable::from_file(an_tokens);
    fsx::AnnotationService svc(load_scheme(an_scheme), tokens.annotators());
    svc.add_sample(fsx::make_annotation_sample(snap.graph, an_id, ids), an_store);
    httplib::Server server;
    fsx::mount_annotation_api(server, svc, tokens, an_ui);
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cerr << "serving sample '" << an_id << "' (" << ids.size() << " posts) on http://" << an_host << ':'
              << an_port << '\n';
    if (!server.listen(an_host, an_port) && !g_stop) {
      throw fsx::DataError("cannot listen on " + an_host + ":" + std::to_string(an_port));
    }
  });

  // synth
  std::string sy_config, sy_out, sy_truth;
  std::uint64_t sy_seed = 0;
  std::uint32_t sy_members = 0;
  auto* sy = app.add_subcommand("synth", "Generate a synthetic forum corpus with ground-truth classes");
  sy->add_option("-c,--config", sy_config, "Synth config JSON (defaults otherwise)");
  sy->add_option("--seed", sy_seed, "Override the config seed");
  sy->add_option("--members", sy_members, "Override the member count");
  sy->add_option("-o,--out", sy_out, "Corpus JSON-lines")->required();
  sy->add_option("--truth", sy_truth, "Ground truth CSV post_id,class")->required();
  sy->callback([&] {
    auto cfg = sy_config.empty() ? fsx::SynthConfig{} : fsx::synth_config_from_json(read_json(sy_config));
    if (sy->count("--seed")) cfg.seed = sy_seed;
    if (sy_members) cfg.n_members = sy_members;
    auto corpus = fsx::generate(cfg);
    std::ofstream f, g;
    fsx::write_jsonl(open_out(sy_out, f), corpus.records);
    fsx::write_truth(open_out(sy_truth, g), corpus);
    std::cerr << corpus.records.size() << " posts by " << cfg.n_members << " members\n";
  });

  // report
  std::string rp_dir;
  auto* rp = app.add_subcommand("report", "Print the tables of a finished run directory");
  rp->add_option("dir", rp_dir, "Run output directory")->required();
  rp->callback([&] {
    const fs::path dir(rp_dir);
    std::vector<std::pair<std::string, fsx::EvalReport>> reps;
    std::vector<std::string> names;
    for (const auto* st : {"proportional", "uniform"}) {
      const auto p = dir / ("holdout_" + std::string(st) + ".json");
      if (!fs::exists(p)) continue;
      auto j = read_json(p.string());
      fsx::EvalReport r;
      names.clear();
      int c = 0;
      for (const auto& e : j.at("summary").at("per_class")) {
        names.push_back(e.at("class").get<std::string>());
        r.classes.push_back(c);
        r.per_class[c] = {e.at("precision").get<double>(), e.at("recall").get<double>(), 0, 0, 0};
        ++c;
      }
      r.gmean_precision = j.at("summary").at("gmean_precision").get<double>();
      r.gmean_recall = j.at("summary").at("gmean_recall").get<double>();
      reps.emplace_back(st, std::move(r));
    }
    if (reps.empty() && !fs::exists(dir / "agreement.json")) {
      throw fsx::DataError("'" + rp_dir + "' holds no holdout or agreement results");
    }
    if (!reps.empty()) {
      std::cout << "Holdout (geometric mean over seeds)\n";
      fsx::print_eval_table(std::cout, reps, names);
    }
    if (fs::exists(dir / "agreement.txt")) std::cout << "\nAgreement\n" << fsx::read_file(dir / "agreement.txt");
  });

  // run
  std::string run_config, run_out;
  auto* run = app.add_subcommand("run", "Run the full experiment described by a config file");
  run->add_option("-c,--config", run_config, "Experiment config JSON")->required();
  run->add_option("-o,--out", run_out, "Output directory")->required();
  run->callback([&] {
    const auto base = fs::absolute(run_config).parent_path();
    auto res = fsx::run_experiment(read_json(run_config), run_out, base);
    std::cout << fsx::read_file(fs::path(run_out) / "report.txt");
    std::cerr << "artifacts in " << res.out_dir.string() << '\n';
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  } catch (const fsx::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.kind() == fsx::ErrorKind::Validation ? kExitValidation : kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}
