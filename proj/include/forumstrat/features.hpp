#pragma once

// Classifier inputs: document composition, tf-idf vector space, sparse
// feature rows, and SMOTE-style minority oversampling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "forumstrat/error.hpp"
#include "forumstrat/graph.hpp"
#include "forumstrat/rng.hpp"
#include "forumstrat/text.hpp"

namespace forumstrat {

struct Document {
  std::string post_id;
  std::string text;
  std::optional<int> label;
};

/// content, thread title, board title; space-joined.
inline std::string compose_text(const ForumGraph& g, const PostEdge& p) {
  const auto& t = g.threads()[p.thread];
  return p.content + " " + t.title + " " + g.boards()[t.board].name;
}

inline Document compose_document(const PopulationGraph& pop, std::size_t post,
                                 std::optional<int> label = std::nullopt) {
  const auto& p = pop.post(post);
  return Document{p.post_id, compose_text(pop.base(), p), label};
}

struct SparseRow {
  std::vector<std::uint32_t> index;  // ascending
  std::vector<double> value;

  std::size_t nnz() const { return index.size(); }

  double squared_norm() const {
    double s = 0.0;
    for (double v : value) s += v * v;
    return s;
  }

  friend bool operator==(const SparseRow&, const SparseRow&) = default;
};

inline double dot(const SparseRow& a, const SparseRow& b) {
  double s = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.index.size() && j < b.index.size()) {
    if (a.index[i] < b.index[j]) ++i;
    else if (a.index[i] > b.index[j]) ++j;
    else s += a.value[i++] * b.value[j++];
  }
  return s;
}

inline double dot(const SparseRow& a, std::span<const double> dense) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.index.size(); ++k) s += a.value[k] * dense[a.index[k]];
  return s;
}

/// a + u (b - a), merged over the union of supports.
inline SparseRow interpolate(const SparseRow& a, const SparseRow& b, double u) {
  SparseRow out;
  std::size_t i = 0, j = 0;
  while (i < a.index.size() || j < b.index.size()) {
    std::uint32_t idx;
    double va = 0.0, vb = 0.0;
    if (j >= b.index.size() || (i < a.index.size() && a.index[i] < b.index[j])) {
      idx = a.index[i];
      va = a.value[i++];
    } else if (i >= a.index.size() || b.index[j] < a.index[i]) {
      idx = b.index[j];
      vb = b.value[j++];
    } else {
      idx = a.index[i];
      va = a.value[i++];
      vb = b.value[j++];
    }
    const double v = va + u * (vb - va);
    if (v != 0.0) {
      out.index.push_back(idx);
      out.value.push_back(v);
    }
  }
  return out;
}

struct FeatureMatrix {
  std::size_t dim = 0;
  std::vector<SparseRow> rows;
  /// Empty, or one class id per row.
  std::vector<int> labels;

  std::size_t size() const { return rows.size(); }
};

struct VectorizerConfig {
  std::uint32_t min_df = 2;
  std::optional<std::size_t> max_features;
};

/// Vocabulary and idf fitted on a corpus. idf(t) = ln((1 + N) / (1 + df(t))) + 1.
class VectorSpace {
 public:
  VectorSpace() = default;

  std::size_t size() const { return terms_.size(); }
  std::span<const std::string> terms() const { return terms_; }
  std::span<const double> idf() const { return idf_; }
  std::size_t fitted_documents() const { return n_docs_; }
  const VectorizerConfig& config() const { return config_; }
  /// Post ids of the documents the space was fitted on.
  std::span<const std::string> provenance() const { return provenance_; }

  std::optional<std::uint32_t> index_of(const std::string& term) const {
    auto it = index_.find(term);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// tf-idf of preprocessed tokens, L2-normalized. Out-of-vocabulary tokens
  /// are ignored.
  SparseRow vectorize(const std::vector<std::string>& tokens) const {
    std::map<std::uint32_t, double> tf;
    for (const auto& t : tokens) {
      if (auto i = index_of(t)) tf[*i] += 1.0;
    }
    SparseRow row;
    double norm = 0.0;
    for (auto [i, c] : tf) {
      const double v = c * idf_[i];
      row.index.push_back(i);
      row.value.push_back(v);
      norm += v * v;
    }
    if (norm > 0) {
      norm = std::sqrt(norm);
      for (auto& v : row.value) v /= norm;
    }
    return row;
  }

  /// FNV-1a over the vocabulary terms in index order.
  std::uint64_t vocabulary_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& t : terms_) {
      for (unsigned char c : t) {
        h ^= c;
        h *= 0x100000001b3ULL;
      }
      h ^= 0xff;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["format"] = "forumstrat-vector-space";
    j["version"] = 1;
    j["min_df"] = config_.min_df;
    j["max_features"] =
        config_.max_features ? nlohmann::json(*config_.max_features) : nlohmann::json(nullptr);
    j["n_docs"] = n_docs_;
    j["terms"] = terms_;
    j["idf"] = idf_;
    j["provenance"] = provenance_;
    return j;
  }

  static VectorSpace from_json(const nlohmann::json& j) {
    try {
      if (j.at("format") != "forumstrat-vector-space") throw DataError("not a vector space file");
      VectorSpace s;
      s.config_.min_df = j.at("min_df").get<std::uint32_t>();
      if (!j.at("max_features").is_null()) s.config_.max_features = j.at("max_features").get<std::size_t>();
      s.n_docs_ = j.at("n_docs").get<std::size_t>();
      s.terms_ = j.at("terms").get<std::vector<std::string>>();
      s.idf_ = j.at("idf").get<std::vector<double>>();
      s.provenance_ = j.value("provenance", std::vector<std::string>{});
      if (s.idf_.size() != s.terms_.size()) throw DataError("vector space: idf/terms length mismatch");
      s.rebuild_index();
      return s;
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("vector space: ") + e.what());
    }
  }

  friend VectorSpace fit_space(const std::vector<std::vector<std::string>>& tokens,
                               std::span<const std::string> ids, const VectorizerConfig& config);

 private:
  void rebuild_index() {
    index_.clear();
    for (std::uint32_t i = 0; i < terms_.size(); ++i) index_.emplace(terms_[i], i);
  }

  std::vector<std::string> terms_;
  std::vector<double> idf_;
  std::unordered_map<std::string, std::uint32_t> index_;
  std::size_t n_docs_ = 0;
  VectorizerConfig config_;
  std::vector<std::string> provenance_;
};

/// Vocabulary (terms with df >= min_df, optionally the max_features most
/// frequent by df, ties lexicographic) sorted lexicographically.
inline VectorSpace fit_space(const std::vector<std::vector<std::string>>& tokens,
                             std::span<const std::string> ids, const VectorizerConfig& config) {
  std::map<std::string, std::uint32_t> df;
  for (const auto& doc : tokens) {
    std::vector<std::string> uniq(doc.begin(), doc.end());
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    for (auto& t : uniq) ++df[t];
  }
  std::vector<std::pair<std::string, std::uint32_t>> kept;
  for (auto& [t, c] : df) {
    if (c >= config.min_df) kept.emplace_back(t, c);
  }
  if (config.max_features && kept.size() > *config.max_features) {
    std::stable_sort(kept.begin(), kept.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    kept.resize(*config.max_features);
    std::sort(kept.begin(), kept.end());
  }
  VectorSpace s;
  s.config_ = config;
  s.n_docs_ = tokens.size();
  const double n = static_cast<double>(tokens.size());
  for (auto& [t, c] : kept) {
    s.terms_.push_back(t);
    s.idf_.push_back(std::log((1.0 + n) / (1.0 + c)) + 1.0);
  }
  s.provenance_.assign(ids.begin(), ids.end());
  s.rebuild_index();
  return s;
}

/// Optional token cache so callers can preprocess once.
inline std::vector<std::vector<std::string>> preprocess_all(std::span<const Document> docs,
                                                            const StopWords& stop) {
  std::vector<std::vector<std::string>> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(preprocess(d.text, stop));
  return out;
}

inline FeatureMatrix transform_tokens(const VectorSpace& space,
                                      const std::vector<std::vector<std::string>>& tokens,
                                      std::span<const Document> docs) {
  FeatureMatrix m;
  m.dim = space.size();
  m.rows.reserve(tokens.size());
  for (const auto& t : tokens) m.rows.push_back(space.vectorize(t));
  const bool labeled = !docs.empty() && std::all_of(docs.begin(), docs.end(),
                                                     [](const auto& d) { return d.label.has_value(); });
  if (labeled) {
    for (const auto& d : docs) m.labels.push_back(*d.label);
  }
  return m;
}

inline FeatureMatrix transform(const VectorSpace& space, std::span<const Document> docs,
                               const StopWords& stop = StopWords{}) {
  return transform_tokens(space, preprocess_all(docs, stop), docs);
}

inline std::pair<VectorSpace, FeatureMatrix> fit_transform(std::span<const Document> docs,
                                                           const VectorizerConfig& config = {},
                                                           const StopWords& stop = StopWords{}) {
  if (docs.empty()) throw ValidationError("fit_transform: no documents");
  const auto tokens = preprocess_all(docs, stop);
  if (std::all_of(tokens.begin(), tokens.end(), [](const auto& t) { return t.empty(); })) {
    throw DataError("fit_transform: every document is empty after preprocessing");
  }
  std::vector<std::string> ids;
  ids.reserve(docs.size());
  for (const auto& d : docs) ids.push_back(d.post_id);
  auto space = fit_space(tokens, ids, config);
  auto matrix = transform_tokens(space, tokens, docs);
  return {std::move(space), std::move(matrix)};
}

// ---------------------------------------------------------------------------
// Oversampling

struct OversampleOptions {
  std::size_t k = 5;
  std::uint64_t seed = 0;
  /// Leave classes with a single sample as they are instead of failing.
  bool skip_singletons = false;
};

/// Provenance of one synthetic row: row = base + u (neighbor - base).
struct SyntheticOrigin {
  std::size_t row;
  std::size_t base;
  std::size_t neighbor;
  double u;
};

struct OversampleResult {
  FeatureMatrix matrix;
  std::vector<SyntheticOrigin> log;
  /// Classes left below the majority count (only with skip_singletons).
  std::vector<int> skipped_classes;
};

/// k nearest same-class rows of `base` by Euclidean distance, ties by index.
inline std::vector<std::size_t> nearest_neighbors(const FeatureMatrix& m,
                                                  std::span<const std::size_t> candidates,
                                                  std::span<const double> sq_norms,
                                                  std::size_t base, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> d;
  d.reserve(candidates.size());
  for (auto c : candidates) {
    if (c == base) continue;
    const double dist = sq_norms[base] + sq_norms[c] - 2.0 * dot(m.rows[base], m.rows[c]);
    d.emplace_back(std::max(dist, 0.0), c);
  }
  k = std::min(k, d.size());
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(d[i].second);
  return out;
}

/// Brings every class up to the majority count with synthetic rows
/// interpolated between a class member and one of its k nearest same-class
/// neighbours. Originals keep their positions; synthetic rows are appended
/// class by class. Bases cycle through the class in row order.
inline OversampleResult oversample(const FeatureMatrix& in, const OversampleOptions& opts = {}) {
  if (in.labels.size() != in.rows.size()) throw ValidationError("oversample: matrix is unlabeled");
  if (opts.k < 1) throw ValidationError("oversample: k must be >= 1");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < in.labels.size(); ++i) by_class[in.labels[i]].push_back(i);

  OversampleResult res;
  res.matrix = in;
  std::size_t majority = 0;
  for (const auto& [c, rows] : by_class) majority = std::max(majority, rows.size());

  std::vector<double> sq(in.rows.size());
  for (std::size_t i = 0; i < in.rows.size(); ++i) sq[i] = in.rows[i].squared_norm();

  for (const auto& [cls, rows] : by_class) {
    if (rows.size() >= majority) continue;
    if (rows.size() < 2) {
      if (opts.skip_singletons) {
        res.skipped_classes.push_back(cls);
        continue;
      }
      throw DataError("oversample: class " + std::to_string(cls) +
                      " has a single sample; at least 2 are needed to interpolate");
    }
    const std::size_t k = std::min(opts.k, rows.size() - 1);
    Rng rng(derive_seed(opts.seed, static_cast<std::uint64_t>(cls)));
    std::vector<std::vector<std::size_t>> nn(rows.size());
    const std::size_t needed = majority - rows.size();
    for (std::size_t s = 0; s < needed; ++s) {
      const std::size_t slot = s % rows.size();
      const std::size_t base = rows[slot];
      if (nn[slot].empty()) nn[slot] = nearest_neighbors(in, rows, sq, base, k);
      const std::size_t neighbor = nn[slot][rng.uniform_index(nn[slot].size())];
      const double u = rng.uniform01();
      res.log.push_back({res.matrix.rows.size(), base, neighbor, u});
      res.matrix.rows.push_back(interpolate(in.rows[base], in.rows[neighbor], u));
      res.matrix.labels.push_back(cls);
    }
  }
  return res;
}

}  // namespace forumstrat
