#pragma once

// Evaluation statistics: per-class precision/recall, geometric-mean
// aggregation, Cohen's and Fleiss's kappa, Agresti-Coull intervals, and
// population-scale agreement between two classifiers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "forumstrat/csv.hpp"
#include "forumstrat/error.hpp"
#include "forumstrat/rng.hpp"

namespace forumstrat {

// ---------------------------------------------------------------------------
// Geometric mean

inline constexpr double kZeroEpsilon = 1e-6;

enum class ZeroPolicy { Error, Epsilon };

struct GeometricMean {
  double value = 0.0;
  /// True when at least one zero was replaced by kZeroEpsilon.
  bool zero_replaced = false;
};

inline GeometricMean geometric_mean_ex(std::span<const double> values,
                                       ZeroPolicy policy = ZeroPolicy::Epsilon) {
  if (values.empty()) throw ValidationError("geometric_mean: no values");
  GeometricMean g;
  double acc = 0.0;
  for (double v : values) {
    if (std::isnan(v) || v < 0.0) throw ValidationError("geometric_mean: negative or NaN value");
    if (v == 0.0) {
      if (policy == ZeroPolicy::Error) throw ValidationError("geometric_mean: zero value");
      v = kZeroEpsilon;
      g.zero_replaced = true;
    }
    acc += std::log(v);
  }
  g.value = std::exp(acc / static_cast<double>(values.size()));
  return g;
}

inline double geometric_mean(std::span<const double> values, ZeroPolicy policy = ZeroPolicy::Epsilon) {
  return geometric_mean_ex(values, policy).value;
}

inline double geometric_mean(std::initializer_list<double> values,
                             ZeroPolicy policy = ZeroPolicy::Epsilon) {
  return geometric_mean_ex(std::span<const double>(values.begin(), values.size()), policy).value;
}

// ---------------------------------------------------------------------------
// Precision / recall

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  std::uint64_t support = 0;    // truth count
  std::uint64_t predicted = 0;  // prediction count
  std::uint64_t true_positive = 0;
};

struct EvalReport {
  std::vector<int> classes;
  std::map<int, ClassMetrics> per_class;
  /// Classes with support > 0; the geometric means range over these.
  std::vector<int> included;
  double gmean_precision = 0.0;
  double gmean_recall = 0.0;
  std::set<int> zero_prediction_classes;
  bool epsilon_applied = false;
};

/// `classes` fixes the reported universe; when empty it is the sorted union
/// of labels seen in either list.
inline EvalReport precision_recall(std::span<const int> truth, std::span<const int> predicted,
                                   std::span<const int> classes = {}) {
  if (truth.size() != predicted.size()) {
    throw ValidationError("precision_recall: truth has " + std::to_string(truth.size()) +
                          " labels, predictions " + std::to_string(predicted.size()));
  }
  if (truth.empty()) throw ValidationError("precision_recall: no items");
  EvalReport r;
  if (classes.empty()) {
    std::set<int> u(truth.begin(), truth.end());
    u.insert(predicted.begin(), predicted.end());
    r.classes.assign(u.begin(), u.end());
  } else {
    r.classes.assign(classes.begin(), classes.end());
  }
  for (int c : r.classes) r.per_class[c];
  for (std::size_t i = 0; i < truth.size(); ++i) {
    auto t = r.per_class.find(truth[i]);
    auto p = r.per_class.find(predicted[i]);
    if (t == r.per_class.end() || p == r.per_class.end()) {
      throw ValidationError("precision_recall: label outside the class universe");
    }
    ++t->second.support;
    ++p->second.predicted;
    if (truth[i] == predicted[i]) ++t->second.true_positive;
  }
  std::vector<double> ps, rs;
  for (int c : r.classes) {
    auto& m = r.per_class[c];
    if (m.predicted == 0) {
      r.zero_prediction_classes.insert(c);
      m.precision = 0.0;
    } else {
      m.precision = static_cast<double>(m.true_positive) / static_cast<double>(m.predicted);
    }
    m.recall = m.support ? static_cast<double>(m.true_positive) / static_cast<double>(m.support) : 0.0;
    if (m.support > 0) {
      r.included.push_back(c);
      ps.push_back(m.precision);
      rs.push_back(m.recall);
    }
  }
  if (!ps.empty()) {
    auto gp = geometric_mean_ex(ps);
    auto gr = geometric_mean_ex(rs);
    r.gmean_precision = gp.value;
    r.gmean_recall = gr.value;
    r.epsilon_applied = gp.zero_replaced || gr.zero_replaced;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Kappa

enum class KappaKind { Cohen, Fleiss };

struct KappaResult {
  KappaKind kind = KappaKind::Cohen;
  double value = 0.0;
  std::size_t n_items = 0;
  std::size_t n_raters = 0;
};

/// Two raters; p_e from the product of marginals. When p_e = 1 both raters
/// used a single identical category and kappa is 1.
template <class T>
KappaResult cohen_kappa(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw ValidationError("cohen_kappa: label lists differ in length");
  if (a.empty()) throw ValidationError("cohen_kappa: no items");
  std::map<T, std::pair<double, double>> marg;
  double agree = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    marg[a[i]].first += 1.0;
    marg[b[i]].second += 1.0;
    if (a[i] == b[i]) agree += 1.0;
  }
  const double n = static_cast<double>(a.size());
  const double po = agree / n;
  double pe = 0.0;
  for (const auto& [k, m] : marg) pe += (m.first / n) * (m.second / n);
  KappaResult r{KappaKind::Cohen, 0.0, a.size(), 2};
  r.value = pe >= 1.0 ? 1.0 : (po - pe) / (1.0 - pe);
  return r;
}

template <class T>
KappaResult cohen_kappa(const std::vector<T>& a, const std::vector<T>& b) {
  return cohen_kappa(std::span<const T>(a), std::span<const T>(b));
}

/// table[i][j] = number of raters who put item i in category j. Every row
/// must sum to the same r >= 2.
inline KappaResult fleiss_kappa(const std::vector<std::vector<std::uint32_t>>& table) {
  if (table.empty()) throw ValidationError("fleiss_kappa: no items");
  const std::size_t k = table.front().size();
  if (k == 0) throw ValidationError("fleiss_kappa: no categories");
  std::uint64_t r = 0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table[i].size() != k) throw ValidationError("fleiss_kappa: ragged category count");
    std::uint64_t s = 0;
    for (auto c : table[i]) s += c;
    if (i == 0) r = s;
    else if (s != r) {
      throw ValidationError("fleiss_kappa: item " + std::to_string(i) + " has " + std::to_string(s) +
                            " ratings, expected " + std::to_string(r));
    }
  }
  if (r < 2) throw ValidationError("fleiss_kappa: need at least 2 raters per item");
  const double n = static_cast<double>(table.size());
  const double rd = static_cast<double>(r);
  std::vector<double> pj(k, 0.0);
  double pbar = 0.0;
  for (const auto& row : table) {
    double sq = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      sq += static_cast<double>(row[j]) * row[j];
      pj[j] += row[j];
    }
    pbar += (sq - rd) / (rd * (rd - 1.0));
  }
  pbar /= n;
  double pe = 0.0;
  for (double v : pj) {
    const double p = v / (n * rd);
    pe += p * p;
  }
  KappaResult res{KappaKind::Fleiss, 0.0, table.size(), static_cast<std::size_t>(r)};
  res.value = pe >= 1.0 ? 1.0 : (pbar - pe) / (1.0 - pe);
  return res;
}

/// Count table from per-rater label lists (raters x items), categories given
/// by `categories` order.
template <class T>
std::vector<std::vector<std::uint32_t>> rating_table(const std::vector<std::vector<T>>& raters,
                                                     const std::vector<T>& categories) {
  if (raters.empty()) throw ValidationError("rating_table: no raters");
  std::map<T, std::size_t> idx;
  for (std::size_t j = 0; j < categories.size(); ++j) idx.emplace(categories[j], j);
  const std::size_t n = raters.front().size();
  std::vector<std::vector<std::uint32_t>> t(n, std::vector<std::uint32_t>(categories.size(), 0));
  for (const auto& labels : raters) {
    if (labels.size() != n) throw ValidationError("rating_table: raters labeled different item counts");
    for (std::size_t i = 0; i < n; ++i) {
      auto it = idx.find(labels[i]);
      if (it == idx.end()) throw ValidationError("rating_table: label outside the category list");
      ++t[i][it->second];
    }
  }
  return t;
}

inline std::string_view kappa_band(double k) {
  if (k < 0.0) return "poor";
  if (k <= 0.2) return "slight";
  if (k <= 0.4) return "fair";
  if (k <= 0.6) return "moderate";
  if (k <= 0.8) return "substantial";
  return "almost perfect";
}

// ---------------------------------------------------------------------------
// Binomial intervals

inline constexpr double kDefaultZ = 1.96;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// n~ = n + z^2, p~ = (X + z^2/2) / n~, p~ -/+ z sqrt(p~(1 - p~)/n~), clamped
/// to [0, 1].
inline Interval agresti_coull(std::uint64_t successes, std::uint64_t n, double z = kDefaultZ) {
  if (n == 0) throw ValidationError("agresti_coull: n must be >= 1");
  if (successes > n) throw ValidationError("agresti_coull: successes exceed n");
  if (!(z > 0)) throw ValidationError("agresti_coull: z must be > 0");
  const double z2 = z * z;
  const double nt = static_cast<double>(n) + z2;
  const double pt = (static_cast<double>(successes) + z2 / 2.0) / nt;
  const double h = z * std::sqrt(pt * (1.0 - pt) / nt);
  return {std::clamp(pt - h, 0.0, 1.0), std::clamp(pt + h, 0.0, 1.0)};
}

// ---------------------------------------------------------------------------
// Classifier agreement

struct AgreementCounts {
  std::uint64_t agree = 0;
  std::uint64_t only_a = 0;
  std::uint64_t only_b = 0;
  /// Absent when neither classifier ever assigned the class.
  std::optional<Interval> ci;

  std::uint64_t n() const { return agree + only_a + only_b; }
};

struct AgreementReport {
  std::vector<int> classes;
  std::map<int, AgreementCounts> per_class;
  double z = kDefaultZ;
  std::uint64_t n_posts = 0;
};

/// Per class c: agree = |a=c and b=c|, only_a = |a=c, b!=c|,
/// only_b = |a!=c, b=c|; CI over agree / (agree + only_a + only_b).
inline AgreementReport agreement(std::span<const int> a, std::span<const int> b,
                                 std::span<const int> classes = {}, double z = kDefaultZ) {
  if (a.size() != b.size()) {
    throw ValidationError("agreement: prediction lists cover different post universes (" +
                          std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  }
  AgreementReport r;
  r.z = z;
  r.n_posts = a.size();
  if (classes.empty()) {
    std::set<int> u(a.begin(), a.end());
    u.insert(b.begin(), b.end());
    r.classes.assign(u.begin(), u.end());
  } else {
    r.classes.assign(classes.begin(), classes.end());
  }
  for (int c : r.classes) r.per_class[c];
  auto slot = [&](int c) -> AgreementCounts& {
    auto it = r.per_class.find(c);
    if (it == r.per_class.end()) throw ValidationError("agreement: label outside the class universe");
    return it->second;
  };
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i]) {
      ++slot(a[i]).agree;
    } else {
      ++slot(a[i]).only_a;
      ++slot(b[i]).only_b;
    }
  }
  for (auto& [c, k] : r.per_class) {
    if (k.n() > 0) k.ci = agresti_coull(k.agree, k.n(), z);
  }
  return r;
}

/// Prediction CSV rows `post_id,class`.
struct LabeledPost {
  std::string post_id;
  std::string label;
};

inline std::vector<LabeledPost> read_predictions(std::istream& in) {
  auto t = csv::read_table(in, {"post_id", "class"});
  std::size_t pid = 0, cls = 0;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (t.header[i] == "post_id") pid = i;
    if (t.header[i] == "class") cls = i;
  }
  std::vector<LabeledPost> out;
  out.reserve(t.rows.size());
  std::set<std::string> seen;
  for (const auto& row : t.rows) {
    if (!seen.insert(row[pid]).second) throw DataError("duplicate post_id '" + row[pid] + "' in predictions");
    out.push_back({row[pid], row[cls]});
  }
  return out;
}

inline void write_predictions(std::ostream& out, std::span<const LabeledPost> rows) {
  csv::write_row(out, {"post_id", "class"});
  for (const auto& r : rows) csv::write_row(out, {r.post_id, r.label});
}

struct AlignedPredictions {
  std::vector<std::string> post_ids;  // sorted
  std::vector<int> a;
  std::vector<int> b;
};

/// Joins two prediction files on post_id, mapping labels to indices of
/// `classes`. Both files must cover exactly the same posts.
inline AlignedPredictions align_predictions(std::span<const LabeledPost> a, std::span<const LabeledPost> b,
                                            std::span<const std::string> classes) {
  std::unordered_map<std::string, int> cidx;
  for (std::size_t i = 0; i < classes.size(); ++i) cidx.emplace(classes[i], static_cast<int>(i));
  auto lookup = [&](const std::string& label) {
    auto it = cidx.find(label);
    if (it == cidx.end()) throw ValidationError("unknown class '" + label + "' in predictions");
    return it->second;
  };
  std::map<std::string, int> ma;
  for (const auto& r : a) ma.emplace(r.post_id, lookup(r.label));
  std::map<std::string, int> mb;
  for (const auto& r : b) mb.emplace(r.post_id, lookup(r.label));
  if (ma.size() != mb.size()) {
    throw ValidationError("agreement: prediction files cover different post universes (" +
                          std::to_string(ma.size()) + " vs " + std::to_string(mb.size()) + " posts)");
  }
  AlignedPredictions out;
  auto ib = mb.begin();
  for (auto ia = ma.begin(); ia != ma.end(); ++ia, ++ib) {
    if (ia->first != ib->first) {
      throw ValidationError("agreement: post universes differ at '" + ia->first + "' / '" + ib->first + "'");
    }
    out.post_ids.push_back(ia->first);
    out.a.push_back(ia->second);
    out.b.push_back(ib->second);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Disagreement sampling

struct DisagreementSample {
  /// Drawn post indices per class, in class order.
  std::map<int, std::vector<std::size_t>> per_class;
  /// All drawn indices, class by class.
  std::vector<std::size_t> posts;
  std::vector<std::string> warnings;
};

/// For each class in order, draws up to `per_class` posts on which exactly
/// one classifier assigned that class. A post already drawn for an earlier
/// class is not drawn again.
inline DisagreementSample disagreement_sample(std::span<const int> a, std::span<const int> b,
                                              std::span<const int> classes, std::size_t per_class,
                                              std::uint64_t seed) {
  if (a.size() != b.size()) throw ValidationError("disagreement_sample: prediction lists differ in length");
  if (per_class < 1) throw ValidationError("disagreement_sample: per_class must be >= 1");
  DisagreementSample out;
  std::vector<char> drawn(a.size(), 0);
  for (std::size_t ci = 0; ci < classes.size(); ++ci) {
    const int c = classes[ci];
    std::vector<std::size_t> cand;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!drawn[i] && ((a[i] == c) != (b[i] == c))) cand.push_back(i);
    }
    auto& got = out.per_class[c];
    if (cand.size() < per_class) {
      out.warnings.push_back("class " + std::to_string(c) + ": only " + std::to_string(cand.size()) +
                             " disagreement candidates for " + std::to_string(per_class) + " requested");
      got = cand;
    } else {
      Rng rng(derive_seed(seed, ci));
      rng.partial_shuffle(cand, per_class);
      got.assign(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(per_class));
      std::sort(got.begin(), got.end());
    }
    for (auto i : got) {
      drawn[i] = 1;
      out.posts.push_back(i);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

inline std::string class_name(int c, std::span<const std::string> names) {
  if (c >= 0 && static_cast<std::size_t>(c) < names.size()) return names[static_cast<std::size_t>(c)];
  return std::to_string(c);
}

inline nlohmann::json to_json(const EvalReport& r, std::span<const std::string> names = {}) {
  nlohmann::json j;
  nlohmann::json pc = nlohmann::json::array();
  for (int c : r.classes) {
    const auto& m = r.per_class.at(c);
    pc.push_back({{"class", class_name(c, names)},
                  {"precision", m.precision},
                  {"recall", m.recall},
                  {"support", m.support},
                  {"predicted", m.predicted}});
  }
  j["per_class"] = pc;
  j["gmean_precision"] = r.gmean_precision;
  j["gmean_recall"] = r.gmean_recall;
  nlohmann::json z = nlohmann::json::array();
  for (int c : r.zero_prediction_classes) z.push_back(class_name(c, names));
  j["zero_prediction_classes"] = z;
  j["epsilon_applied"] = r.epsilon_applied;
  return j;
}

inline nlohmann::json to_json(const AgreementReport& r, std::span<const std::string> names = {}) {
  nlohmann::json j;
  nlohmann::json pc = nlohmann::json::array();
  for (int c : r.classes) {
    const auto& k = r.per_class.at(c);
    nlohmann::json e{{"class", class_name(c, names)}, {"agree", k.agree}, {"only_a", k.only_a},
                     {"only_b", k.only_b}};
    e["ci"] = k.ci ? nlohmann::json::array({k.ci->lo, k.ci->hi}) : nlohmann::json(nullptr);
    pc.push_back(std::move(e));
  }
  j["per_class"] = pc;
  j["z"] = r.z;
  j["n_posts"] = r.n_posts;
  return j;
}

namespace detail {
inline std::string fixed(double v, int dp = 2) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(dp) << v;
  return s.str();
}

inline void print_aligned(std::ostream& out, const std::vector<std::vector<std::string>>& rows,
                          std::size_t rule_after_header = 1) {
  std::vector<std::size_t> w;
  for (const auto& r : rows) {
    w.resize(std::max(w.size(), r.size()), 0);
    for (std::size_t i = 0; i < r.size(); ++i) w[i] = std::max(w[i], r[i].size());
  }
  std::size_t total = 0;
  for (auto x : w) total += x + 2;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    for (std::size_t i = 0; i < rows[k].size(); ++i) {
      out << (i == 0 ? std::left : std::right) << std::setw(static_cast<int>(w[i])) << rows[k][i];
      if (i + 1 < rows[k].size()) out << "  ";
    }
    out << '\n';
    if (k + 1 == rule_after_header) out << std::string(total > 2 ? total - 2 : 0, '-') << '\n';
  }
}
}  // namespace detail

/// Class | Precision | Recall, closed by a Geometric Mean row; one column
/// pair per named report.
inline void print_eval_table(std::ostream& out, std::span<const std::pair<std::string, EvalReport>> reports,
                             std::span<const std::string> names) {
  if (reports.empty()) return;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> head{"Class"};
  for (const auto& [label, r] : reports) head.push_back("P " + label);
  for (const auto& [label, r] : reports) head.push_back("R " + label);
  rows.push_back(head);
  for (int c : reports.front().second.classes) {
    std::vector<std::string> row{class_name(c, names)};
    for (const auto& [label, r] : reports) row.push_back(detail::fixed(r.per_class.at(c).precision));
    for (const auto& [label, r] : reports) row.push_back(detail::fixed(r.per_class.at(c).recall));
    rows.push_back(row);
  }
  std::vector<std::string> g{"Geometric Mean"};
  for (const auto& [label, r] : reports) g.push_back(detail::fixed(r.gmean_precision));
  for (const auto& [label, r] : reports) g.push_back(detail::fixed(r.gmean_recall));
  rows.push_back(g);
  detail::print_aligned(out, rows);
}

/// Class | #Agree | #A only | #B only | CI Agreement.
inline void print_agreement_table(std::ostream& out, const AgreementReport& r,
                                  std::span<const std::string> names, const std::string& label_a = "A",
                                  const std::string& label_b = "B") {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"Class", "#Agree", "#" + label_a + " only", "#" + label_b + " only", "CI Agreement"});
  for (int c : r.classes) {
    const auto& k = r.per_class.at(c);
    rows.push_back({class_name(c, names), std::to_string(k.agree), std::to_string(k.only_a),
                    std::to_string(k.only_b),
                    k.ci ? "(" + detail::fixed(k.ci->lo) + "," + detail::fixed(k.ci->hi) + ")" : "n/a"});
  }
  detail::print_aligned(out, rows);
}

}  // namespace forumstrat
