#pragma once

// One-vs-rest linear classifiers trained by seeded SGD, model files, and the
// repeated stratified holdout protocol.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "forumstrat/error.hpp"
#include "forumstrat/features.hpp"
#include "forumstrat/rng.hpp"
#include "forumstrat/stats.hpp"
#include "forumstrat/text.hpp"

namespace forumstrat {

enum class Loss { Hinge, Logistic };

inline std::string_view to_string(Loss l) { return l == Loss::Hinge ? "hinge" : "logistic"; }

inline Loss parse_loss(std::string_view s) {
  if (s == "hinge") return Loss::Hinge;
  if (s == "logistic" || s == "log") return Loss::Logistic;
  throw ValidationError("unknown loss '" + std::string(s) + "'");
}

struct TrainConfig {
  Loss loss = Loss::Hinge;
  double lambda = 1e-4;
  int epochs = 20;
  /// Step size at epoch t is learning_rate / t.
  double learning_rate = 0.1;
  std::uint64_t seed = 0;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"loss", to_string(c.loss)},
          {"lambda", c.lambda},
          {"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (j.contains("loss")) c.loss = parse_loss(j.at("loss").get<std::string>());
  c.lambda = j.value("lambda", c.lambda);
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.seed = j.value("seed", c.seed);
  if (c.epochs < 1) throw ValidationError("train: epochs must be >= 1");
  if (!(c.learning_rate > 0)) throw ValidationError("train: learning_rate must be > 0");
  if (c.lambda < 0) throw ValidationError("train: lambda must be >= 0");
  return c;
}

struct LinearModel {
  std::vector<int> classes;
  std::size_t dim = 0;
  /// weights[k] scores classes[k].
  std::vector<std::vector<double>> weights;
  std::vector<double> bias;
  TrainConfig config;
  std::uint64_t vocabulary_hash = 0;

  friend bool operator==(const LinearModel&, const LinearModel&) = default;
};

// ---------------------------------------------------------------------------
// Binary objective: lambda/2 |w|^2 + mean_i loss(y_i (w.x_i + b)), y in {-1, +1}

namespace detail {
inline double loss_value(Loss l, double z) {
  if (l == Loss::Hinge) return std::max(0.0, 1.0 - z);
  // log(1 + e^-z), stable in both tails
  return z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

/// d loss / d z
inline double loss_slope(Loss l, double z) {
  if (l == Loss::Hinge) return z < 1.0 ? -1.0 : 0.0;
  return z > 0 ? -std::exp(-z) / (1.0 + std::exp(-z)) : -1.0 / (1.0 + std::exp(z));
}
}  // namespace detail

inline double binary_objective(const FeatureMatrix& m, std::span<const double> y, std::span<const double> w,
                               double b, double lambda, Loss loss) {
  double r = 0.0;
  for (double v : w) r += v * v;
  double l = 0.0;
  for (std::size_t i = 0; i < m.rows.size(); ++i) l += detail::loss_value(loss, y[i] * (dot(m.rows[i], w) + b));
  return 0.5 * lambda * r + l / static_cast<double>(m.rows.size());
}

/// Gradient of binary_objective; returns (dw, db).
inline std::pair<std::vector<double>, double> binary_gradient(const FeatureMatrix& m, std::span<const double> y,
                                                              std::span<const double> w, double b,
                                                              double lambda, Loss loss) {
  std::vector<double> g(w.begin(), w.end());
  for (auto& v : g) v *= lambda;
  double gb = 0.0;
  const double inv_n = 1.0 / static_cast<double>(m.rows.size());
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    const double s = detail::loss_slope(loss, y[i] * (dot(m.rows[i], w) + b)) * y[i] * inv_n;
    const auto& row = m.rows[i];
    for (std::size_t k = 0; k < row.index.size(); ++k) g[row.index[k]] += s * row.value[k];
    gb += s;
  }
  return {std::move(g), gb};
}

/// SGD on the binary objective. w is kept as scale * v so the L2 shrink is
/// O(1) per step. Visit order per epoch comes from `seed` and the epoch.
inline std::pair<std::vector<double>, double> train_binary(const FeatureMatrix& m, std::span<const double> y,
                                                           const TrainConfig& cfg, std::uint64_t seed) {
  std::vector<double> v(m.dim, 0.0);
  double scale = 1.0;
  double b = 0.0;
  std::vector<std::size_t> order(m.rows.size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double eta = cfg.learning_rate / epoch;
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    const double shrink = 1.0 - eta * cfg.lambda;
    for (auto i : order) {
      const auto& row = m.rows[i];
      const double z = y[i] * (scale * dot(row, v) + b);
      if (shrink > 0) {
        scale *= shrink;
      } else {
        std::fill(v.begin(), v.end(), 0.0);
        scale = 1.0;
      }
      const double s = detail::loss_slope(cfg.loss, z);
      if (s != 0.0) {
        const double step = -eta * s * y[i];
        for (std::size_t k = 0; k < row.index.size(); ++k) v[row.index[k]] += step * row.value[k] / scale;
        b += step;
      }
      if (scale < 1e-9) {
        for (auto& x : v) x *= scale;
        scale = 1.0;
      }
    }
  }
  for (auto& x : v) x *= scale;
  return {std::move(v), b};
}

/// One-vs-rest training over the classes present in `m.labels`, or over
/// `classes` when given (each must have at least one row).
inline LinearModel train(const FeatureMatrix& m, const TrainConfig& cfg = {}, std::span<const int> classes = {}) {
  if (m.labels.size() != m.rows.size()) throw ValidationError("train: matrix is unlabeled");
  if (m.rows.empty()) throw ValidationError("train: no rows");
  if (cfg.epochs < 1) throw ValidationError("train: epochs must be >= 1");
  std::map<int, std::size_t> counts;
  for (int l : m.labels) ++counts[l];
  LinearModel model;
  if (classes.empty()) {
    for (auto& [c, n] : counts) model.classes.push_back(c);
  } else {
    model.classes.assign(classes.begin(), classes.end());
    for (int c : model.classes) {
      if (!counts.contains(c)) throw ValidationError("train: class " + std::to_string(c) + " has no samples");
    }
    for (auto& [c, n] : counts) {
      if (std::find(model.classes.begin(), model.classes.end(), c) == model.classes.end()) {
        throw ValidationError("train: label " + std::to_string(c) + " is not in the class list");
      }
    }
  }
  if (model.classes.size() < 2) throw ValidationError("train: need at least 2 classes, got " +
                                                      std::to_string(model.classes.size()));
  model.dim = m.dim;
  model.config = cfg;
  std::vector<double> y(m.rows.size());
  for (std::size_t k = 0; k < model.classes.size(); ++k) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = m.labels[i] == model.classes[k] ? 1.0 : -1.0;
    auto [w, b] = train_binary(m, y, cfg, derive_seed(cfg.seed, k));
    model.weights.push_back(std::move(w));
    model.bias.push_back(b);
  }
  return model;
}

struct Prediction {
  std::vector<int> labels;
  /// scores[i][k] for model.classes[k].
  std::vector<std::vector<double>> scores;
};

inline Prediction predict(const LinearModel& model, const FeatureMatrix& m) {
  if (m.dim != model.dim) {
    throw ValidationError("predict: matrix dimension " + std::to_string(m.dim) + " does not match model dimension " +
                          std::to_string(model.dim));
  }
  Prediction p;
  p.labels.reserve(m.rows.size());
  p.scores.reserve(m.rows.size());
  for (const auto& row : m.rows) {
    std::vector<double> s(model.classes.size());
    std::size_t best = 0;
    for (std::size_t k = 0; k < s.size(); ++k) {
      s[k] = dot(row, model.weights[k]) + model.bias[k];
      if (s[k] > s[best]) best = k;
    }
    p.labels.push_back(model.classes[best]);
    p.scores.push_back(std::move(s));
  }
  return p;
}

// ---------------------------------------------------------------------------
// Model file: one JSON header line, then little-endian IEEE-754 doubles,
// class by class: dim weights followed by the bias.

namespace detail {
inline void put_f64(std::ostream& out, double v) {
  auto u = std::bit_cast<std::uint64_t>(v);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((u >> (8 * i)) & 0xff);
  out.write(b, 8);
}

inline double get_f64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw DataError("model file: truncated weight payload");
  std::uint64_t u = 0;
  for (int i = 7; i >= 0; --i) u = (u << 8) | b[i];
  return std::bit_cast<double>(u);
}

inline std::string hex64(std::uint64_t v) {
  static const char* d = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = d[v & 0xf];
  return s;
}
}  // namespace detail

inline void save_model(std::ostream& out, const LinearModel& m) {
  nlohmann::json h{{"format", "forumstrat-linear-model"},
                   {"version", 1},
                   {"classes", m.classes},
                   {"dim", m.dim},
                   {"config", to_json(m.config)},
                   {"vocabulary_hash", detail::hex64(m.vocabulary_hash)}};
  out << h.dump() << '\n';
  for (std::size_t k = 0; k < m.classes.size(); ++k) {
    for (double w : m.weights[k]) detail::put_f64(out, w);
    detail::put_f64(out, m.bias[k]);
  }
}

inline LinearModel load_model(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("model file: missing header");
  LinearModel m;
  try {
    auto h = nlohmann::json::parse(line);
    if (h.at("format") != "forumstrat-linear-model") throw DataError("model file: unknown format");
    m.classes = h.at("classes").get<std::vector<int>>();
    m.dim = h.at("dim").get<std::size_t>();
    m.config = train_config_from_json(h.at("config"));
    m.vocabulary_hash = std::stoull(h.at("vocabulary_hash").get<std::string>(), nullptr, 16);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model file: bad header: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw DataError("model file: bad vocabulary hash");
  }
  for (std::size_t k = 0; k < m.classes.size(); ++k) {
    std::vector<double> w(m.dim);
    for (auto& x : w) x = detail::get_f64(in);
    m.weights.push_back(std::move(w));
    m.bias.push_back(detail::get_f64(in));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Pluggable classifier interface

class TextClassifier {
 public:
  virtual ~TextClassifier() = default;
  virtual std::string_view name() const = 0;
  virtual void fit(const FeatureMatrix& m, std::span<const int> classes) = 0;
  virtual Prediction predict(const FeatureMatrix& m) const = 0;
  virtual void save(std::ostream& out) const = 0;
};

class LinearClassifier final : public TextClassifier {
 public:
  explicit LinearClassifier(TrainConfig cfg = {}) : cfg_(cfg) {}

  std::string_view name() const override { return "linear-sgd"; }
  void fit(const FeatureMatrix& m, std::span<const int> classes) override { model_ = train(m, cfg_, classes); }
  Prediction predict(const FeatureMatrix& m) const override { return forumstrat::predict(model_, m); }
  void save(std::ostream& out) const override { save_model(out, model_); }

  const LinearModel& model() const { return model_; }

 private:
  TrainConfig cfg_;
  LinearModel model_;
};

// ---------------------------------------------------------------------------
// Repeated stratified holdout

struct HoldoutConfig {
  std::vector<std::uint64_t> seeds;
  double split = 0.8;
  VectorizerConfig vectorizer;
  std::size_t smote_k = 5;
  /// Oversample the training fold to the majority class count.
  bool oversample = true;
  TrainConfig train;
};

struct HoldoutRun {
  std::uint64_t seed = 0;
  std::vector<std::size_t> train_idx;  // ascending
  std::vector<std::size_t> test_idx;   // ascending
  VectorSpace space;
  EvalReport report;
  /// Classes absent from the training fold.
  std::vector<int> missing_train_classes;
};

/// Per-document stratum keys for class-distribution stratification.
inline std::vector<int> class_strata(std::span<const Document> docs) {
  std::vector<int> out;
  out.reserve(docs.size());
  for (const auto& d : docs) {
    if (!d.label) throw ValidationError("holdout: document '" + d.post_id + "' is unlabeled");
    out.push_back(*d.label);
  }
  return out;
}

/// Splits each stratum independently: round(split * n) items, at least one
/// on each side, go to training.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(std::span<const int> strata,
                                                                                      double split,
                                                                                      std::uint64_t seed) {
  if (!(split > 0.0 && split < 1.0)) throw ValidationError("holdout: split must lie in (0, 1)");
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < strata.size(); ++i) groups[strata[i]].push_back(i);
  std::vector<std::size_t> train, test;
  for (auto& [key, idx] : groups) {
    if (idx.size() < 2) {
      throw ValidationError("holdout: stratum " + std::to_string(key) + " has " + std::to_string(idx.size()) +
                            " item(s); at least 2 are needed to split");
    }
    const auto n = idx.size();
    auto n_train = static_cast<std::size_t>(std::llround(split * static_cast<double>(n)));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(static_cast<std::int64_t>(key))));
    rng.partial_shuffle(idx, n_train);
    train.insert(train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    test.insert(test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {std::move(train), std::move(test)};
}

/// For each seed: stratified split, vocabulary and idf fitted on the training
/// fold only, oversampling of the training fold only, training, evaluation on
/// the held-out fold. `classes` fixes the label universe and model order.
inline std::vector<HoldoutRun> repeated_holdout(std::span<const Document> docs, std::span<const int> classes,
                                                std::span<const int> strata, const HoldoutConfig& cfg,
                                                const StopWords& stop = StopWords{}) {
  if (docs.size() != strata.size()) throw ValidationError("holdout: strata and documents differ in length");
  if (cfg.seeds.empty()) throw ValidationError("holdout: no seeds");
  const auto labels = class_strata(docs);
  const auto tokens = preprocess_all(docs, stop);
  std::vector<HoldoutRun> runs;
  for (auto seed : cfg.seeds) {
    HoldoutRun run;
    run.seed = seed;
    std::tie(run.train_idx, run.test_idx) = stratified_split(strata, cfg.split, seed);

    std::vector<std::vector<std::string>> tr_tok, te_tok;
    std::vector<Document> tr_docs, te_docs;
    std::vector<std::string> tr_ids;
    for (auto i : run.train_idx) {
      tr_tok.push_back(tokens[i]);
      tr_docs.push_back(docs[i]);
      tr_ids.push_back(docs[i].post_id);
    }
    for (auto i : run.test_idx) {
      te_tok.push_back(tokens[i]);
      te_docs.push_back(docs[i]);
    }
    run.space = fit_space(tr_tok, tr_ids, cfg.vectorizer);
    auto train_m = transform_tokens(run.space, tr_tok, tr_docs);
    auto test_m = transform_tokens(run.space, te_tok, te_docs);

    std::set<int> present(train_m.labels.begin(), train_m.labels.end());
    std::vector<int> fit_classes;
    for (int c : classes) {
      if (present.contains(c)) fit_classes.push_back(c);
      else run.missing_train_classes.push_back(c);
    }
    if (cfg.oversample) {
      train_m = oversample(train_m, {cfg.smote_k, derive_seed(seed, 0x5e7e), true}).matrix;
    }
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.train.seed, seed);
    auto model = train(train_m, tc, fit_classes);
    auto pred = predict(model, test_m);
    run.report = precision_recall(test_m.labels, pred.labels, classes);
    runs.push_back(std::move(run));
  }
  return runs;
}

/// Across runs: per-class geometric mean of precision and recall (zero
/// replaced by epsilon), then the geometric mean over classes.
struct HoldoutSummary {
  std::vector<int> classes;
  std::map<int, std::pair<double, double>> per_class;  // (precision, recall)
  double gmean_precision = 0.0;
  double gmean_recall = 0.0;
  std::size_t runs = 0;
  /// Runs with at least one class never predicted.
  std::size_t runs_with_zero_predictions = 0;
};

inline HoldoutSummary aggregate(std::span<const HoldoutRun> runs) {
  if (runs.empty()) throw ValidationError("aggregate: no runs");
  HoldoutSummary s;
  s.classes = runs.front().report.classes;
  s.runs = runs.size();
  std::vector<double> cp, cr;
  for (int c : s.classes) {
    std::vector<double> p, r;
    for (const auto& run : runs) {
      const auto& m = run.report.per_class.at(c);
      if (m.support == 0) continue;
      p.push_back(m.precision);
      r.push_back(m.recall);
    }
    if (p.empty()) continue;
    const double gp = geometric_mean(p);
    const double gr = geometric_mean(r);
    s.per_class[c] = {gp, gr};
    cp.push_back(gp);
    cr.push_back(gr);
  }
  for (const auto& run : runs) {
    if (!run.report.zero_prediction_classes.empty()) ++s.runs_with_zero_predictions;
  }
  if (!cp.empty()) {
    s.gmean_precision = geometric_mean(cp);
    s.gmean_recall = geometric_mean(cr);
  }
  return s;
}

inline nlohmann::json to_json(const HoldoutSummary& s, std::span<const std::string> names = {}) {
  nlohmann::json pc = nlohmann::json::array();
  for (const auto& [c, pr] : s.per_class) {
    pc.push_back({{"class", class_name(c, names)}, {"precision", pr.first}, {"recall", pr.second}});
  }
  return {{"per_class", pc},
          {"gmean_precision", s.gmean_precision},
          {"gmean_recall", s.gmean_recall},
          {"runs", s.runs},
          {"runs_with_zero_predictions", s.runs_with_zero_predictions}};
}

/// Summary as an EvalReport-shaped table row set.
inline EvalReport summary_report(const HoldoutSummary& s) {
  EvalReport r;
  r.classes = s.classes;
  for (int c : s.classes) {
    auto& m = r.per_class[c];
    if (auto it = s.per_class.find(c); it != s.per_class.end()) {
      m.precision = it->second.first;
      m.recall = it->second.second;
    }
  }
  r.gmean_precision = s.gmean_precision;
  r.gmean_recall = s.gmean_recall;
  return r;
}

}  // namespace forumstrat
