#pragma once

// Synthetic forums with heavy-tailed member activity and planted class
// structure: rarer classes can be tilted toward the most active members.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "forumstrat/csv.hpp"
#include "forumstrat/error.hpp"
#include "forumstrat/graph.hpp"
#include "forumstrat/rng.hpp"
#include "forumstrat/scheme.hpp"
#include "forumstrat/time.hpp"

namespace forumstrat {

struct SynthConfig {
  std::uint32_t n_members = 1000;
  std::uint32_t n_threads = 400;
  std::uint32_t n_boards = 8;
  /// Exponent of the discrete power law for posts per member.
  double activity_exponent = 2.0;
  /// Largest post count a member can draw.
  std::uint32_t max_posts_per_member = 1000;
  /// Ordered (class, fraction) pairs; fractions sum to 1.
  std::vector<std::pair<std::string, double>> class_mix;
  /// Class -> b >= 0. A member's class weights are a_c (1 + b_c s) with s
  /// its normalized log activity in [0, 1].
  std::map<std::string, double> class_centrality_bias;
  std::uint32_t vocab_per_class = 40;
  std::uint32_t noise_vocab = 1500;
  std::uint32_t tokens_per_post = 14;
  /// Share of a post's tokens drawn from its class vocabulary.
  double signal_fraction = 0.25;
  /// Zipf exponent of thread popularity.
  double thread_exponent = 1.0;
  /// Chance a member's next post returns to a thread it already posted in.
  double repeat_thread = 0.3;
  std::uint64_t seed = 1;
};

/// Mix proportional to the per-class counts of a 1,500-post labeled sample
/// of a trading board.
inline std::vector<std::pair<std::string, double>> default_class_mix() {
  const std::vector<std::pair<std::string, double>> counts = {
      {"not_criminal", 1041}, {"access_to_system", 57}, {"bots_malware", 157}, {"ddos_booting", 59},
      {"spam", 46},           {"trading_credentials", 106}, {"vpn_hosting", 34}};
  std::vector<std::pair<std::string, double>> mix;
  for (const auto& [c, n] : counts) mix.emplace_back(c, n / 1500.0);
  return mix;
}

inline nlohmann::json to_json(const SynthConfig& c) {
  nlohmann::json mix = nlohmann::json::array();
  for (const auto& [k, v] : c.class_mix) mix.push_back({k, v});
  return {{"n_members", c.n_members},
          {"n_threads", c.n_threads},
          {"n_boards", c.n_boards},
          {"activity_exponent", c.activity_exponent},
          {"max_posts_per_member", c.max_posts_per_member},
          {"class_mix", mix},
          {"class_centrality_bias", c.class_centrality_bias},
          {"vocab_per_class", c.vocab_per_class},
          {"noise_vocab", c.noise_vocab},
          {"tokens_per_post", c.tokens_per_post},
          {"signal_fraction", c.signal_fraction},
          {"thread_exponent", c.thread_exponent},
          {"repeat_thread", c.repeat_thread},
          {"seed", c.seed}};
}

/// Missing keys keep their defaults; a missing class_mix means
/// default_class_mix().
inline SynthConfig synth_config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  try {
    c.n_members = j.value("n_members", c.n_members);
    c.n_threads = j.value("n_threads", c.n_threads);
    c.n_boards = j.value("n_boards", c.n_boards);
    c.activity_exponent = j.value("activity_exponent", c.activity_exponent);
    c.max_posts_per_member = j.value("max_posts_per_member", c.max_posts_per_member);
    if (j.contains("class_mix")) {
      const auto& m = j.at("class_mix");
      if (m.is_object()) {
        for (auto it = m.begin(); it != m.end(); ++it) c.class_mix.emplace_back(it.key(), it.value().get<double>());
      } else {
        for (const auto& e : m) c.class_mix.emplace_back(e.at(0).get<std::string>(), e.at(1).get<double>());
      }
    }
    if (j.contains("class_centrality_bias")) {
      c.class_centrality_bias = j.at("class_centrality_bias").get<std::map<std::string, double>>();
    }
    c.vocab_per_class = j.value("vocab_per_class", c.vocab_per_class);
    c.noise_vocab = j.value("noise_vocab", c.noise_vocab);
    c.tokens_per_post = j.value("tokens_per_post", c.tokens_per_post);
    c.signal_fraction = j.value("signal_fraction", c.signal_fraction);
    c.thread_exponent = j.value("thread_exponent", c.thread_exponent);
    c.repeat_thread = j.value("repeat_thread", c.repeat_thread);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("synth config: ") + e.what());
  }
  return c;
}

struct SynthCorpus {
  std::vector<PostRecord> records;
  /// (post_id, class) in record order.
  std::vector<std::pair<std::string, std::string>> truth;
  std::vector<std::string> classes;
  /// Posts per member, in member order.
  std::vector<std::uint32_t> member_posts;
};

/// Inverse-CDF sampler for P(k) proportional to k^-alpha on {1..kmax}.
class ZetaSampler {
 public:
  ZetaSampler(double alpha, std::uint32_t kmax) : cdf_(kmax) {
    double s = 0.0;
    for (std::uint32_t k = 1; k <= kmax; ++k) {
      s += std::pow(static_cast<double>(k), -alpha);
      cdf_[k - 1] = s;
    }
    for (auto& v : cdf_) v /= s;
  }

  std::uint32_t operator()(Rng& rng) const {
    const double u = rng.uniform01();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    if (it == cdf_.end()) --it;
    return static_cast<std::uint32_t>(it - cdf_.begin()) + 1;
  }

 private:
  std::vector<double> cdf_;
};

/// Draws an index from a cumulative weight table.
inline std::size_t draw_cdf(std::span<const double> cdf, Rng& rng) {
  const double u = rng.uniform01() * cdf.back();
  auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  if (it == cdf.end()) --it;
  return static_cast<std::size_t>(it - cdf.begin());
}

/// Distinct pronounceable pseudo-words, lower-case letters only.
inline std::vector<std::string> pseudo_words(std::size_t n, Rng& rng, std::set<std::string>& taken) {
  static constexpr std::string_view onset = "bdfgklmnprstvz";
  static constexpr std::string_view vowel = "aeiou";
  std::vector<std::string> out;
  out.reserve(n);
  while (out.size() < n) {
    const std::size_t syl = 2 + rng.uniform_index(2);
    std::string w;
    for (std::size_t i = 0; i < syl; ++i) {
      w += onset[rng.uniform_index(onset.size())];
      w += vowel[rng.uniform_index(vowel.size())];
    }
    w += onset[rng.uniform_index(onset.size())];
    if (taken.insert(w).second) out.push_back(std::move(w));
  }
  return out;
}

namespace detail {
inline void validate(const SynthConfig& c) {
  if (c.n_members == 0 || c.n_threads == 0 || c.n_boards == 0) {
    throw ValidationError("synth: member, thread and board counts must be positive");
  }
  if (c.n_boards > c.n_threads) throw ValidationError("synth: more boards than threads");
  if (!(c.activity_exponent > 1.0)) throw ValidationError("synth: activity_exponent must be > 1");
  if (c.max_posts_per_member == 0) throw ValidationError("synth: max_posts_per_member must be >= 1");
  if (c.class_mix.empty()) throw ValidationError("synth: class_mix is empty");
  double s = 0.0;
  std::set<std::string> names;
  for (const auto& [k, v] : c.class_mix) {
    if (!(v >= 0.0)) throw ValidationError("synth: negative fraction for class '" + k + "'");
    if (!names.insert(k).second) throw ValidationError("synth: class '" + k + "' listed twice");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-9) throw ValidationError("synth: class_mix fractions sum to " + std::to_string(s));
  for (const auto& [k, b] : c.class_centrality_bias) {
    if (!names.contains(k)) throw ValidationError("synth: bias given for unknown class '" + k + "'");
    if (!(b >= 0.0)) throw ValidationError("synth: class_centrality_bias must be >= 0");
  }
  if (c.tokens_per_post == 0) throw ValidationError("synth: tokens_per_post must be >= 1");
  if (c.vocab_per_class == 0 || c.noise_vocab == 0) throw ValidationError("synth: vocabularies must be non-empty");
  if (!(c.signal_fraction >= 0.0 && c.signal_fraction <= 1.0)) {
    throw ValidationError("synth: signal_fraction must lie in [0, 1]");
  }
  if (!(c.repeat_thread >= 0.0 && c.repeat_thread < 1.0)) {
    throw ValidationError("synth: repeat_thread must lie in [0, 1)");
  }
}
}  // namespace detail

/// Fits base weights a_c so that the expected share of posts per class
/// equals the configured mix, given per-member activity scores s_m and post
/// counts k_m. Returns per-member cumulative class tables.
inline std::vector<std::vector<double>> class_tables(const SynthConfig& c, std::span<const std::uint32_t> posts,
                                                     std::span<const double> activity) {
  const std::size_t nc = c.class_mix.size();
  std::vector<double> target(nc), bias(nc, 0.0), a(nc);
  for (std::size_t k = 0; k < nc; ++k) {
    target[k] = c.class_mix[k].second;
    if (auto it = c.class_centrality_bias.find(c.class_mix[k].first); it != c.class_centrality_bias.end()) {
      bias[k] = it->second;
    }
    a[k] = target[k];
  }
  double total = 0.0;
  for (auto p : posts) total += p;
  for (int iter = 0; iter < 500; ++iter) {
    std::vector<double> got(nc, 0.0);
    for (std::size_t m = 0; m < posts.size(); ++m) {
      double z = 0.0;
      for (std::size_t k = 0; k < nc; ++k) z += a[k] * (1.0 + bias[k] * activity[m]);
      if (z <= 0) continue;
      for (std::size_t k = 0; k < nc; ++k) got[k] += posts[m] * a[k] * (1.0 + bias[k] * activity[m]) / z;
    }
    double err = 0.0;
    for (std::size_t k = 0; k < nc; ++k) {
      got[k] /= total;
      if (got[k] > 0) a[k] *= target[k] / got[k];
      err = std::max(err, std::abs(got[k] - target[k]));
    }
    if (err < 1e-12) break;
  }
  std::vector<std::vector<double>> tables(posts.size(), std::vector<double>(nc));
  for (std::size_t m = 0; m < posts.size(); ++m) {
    double s = 0.0;
    for (std::size_t k = 0; k < nc; ++k) {
      s += a[k] * (1.0 + bias[k] * activity[m]);
      tables[m][k] = s;
    }
  }
  return tables;
}

inline SynthCorpus generate(const SynthConfig& config_in) {
  SynthConfig c = config_in;
  if (c.class_mix.empty()) c.class_mix = default_class_mix();
  detail::validate(c);

  SynthCorpus out;
  for (const auto& [k, v] : c.class_mix) out.classes.push_back(k);
  const std::size_t nc = out.classes.size();

  // Activity
  Rng act(derive_seed(c.seed, 1));
  ZetaSampler zeta(c.activity_exponent, c.max_posts_per_member);
  out.member_posts.resize(c.n_members);
  std::uint64_t total = 0;
  for (auto& k : out.member_posts) {
    k = zeta(act);
    total += k;
  }
  for (std::size_t k = 0; k < nc; ++k) {
    if (c.class_mix[k].second > 0 && c.class_mix[k].second * static_cast<double>(total) < 1.0) {
      throw InfeasibleError("synth: class '" + c.class_mix[k].first + "' gets " +
                            std::to_string(c.class_mix[k].second * static_cast<double>(total)) +
                            " expected posts out of " + std::to_string(total) + "; the mix is infeasible");
    }
  }
  const auto maxk = *std::max_element(out.member_posts.begin(), out.member_posts.end());
  std::vector<double> activity(c.n_members, 0.0);
  for (std::size_t m = 0; m < c.n_members; ++m) {
    activity[m] = maxk > 1 ? std::log1p(out.member_posts[m]) / std::log1p(static_cast<double>(maxk)) : 0.0;
  }
  const auto tables = class_tables(c, out.member_posts, activity);

  // Vocabulary
  Rng words(derive_seed(c.seed, 2));
  std::set<std::string> taken;
  std::vector<std::vector<std::string>> class_vocab;
  for (std::size_t k = 0; k < nc; ++k) class_vocab.push_back(pseudo_words(c.vocab_per_class, words, taken));
  const auto noise = pseudo_words(c.noise_vocab, words, taken);
  const auto board_words = pseudo_words(c.n_boards, words, taken);

  // Boards and threads
  Rng topo(derive_seed(c.seed, 3));
  std::vector<std::string> boards;
  for (std::uint32_t b = 0; b < c.n_boards; ++b) boards.push_back(board_words[b] + " board");
  std::vector<std::uint32_t> thread_board(c.n_threads);
  std::vector<std::string> thread_title(c.n_threads);
  for (std::uint32_t t = 0; t < c.n_threads; ++t) {
    thread_board[t] = t < c.n_boards ? t : static_cast<std::uint32_t>(topo.uniform_index(c.n_boards));
    std::string title;
    for (int w = 0; w < 3; ++w) {
      if (w) title += ' ';
      title += noise[topo.uniform_index(noise.size())];
    }
    thread_title[t] = std::move(title);
  }
  std::vector<double> thread_cdf(c.n_threads);
  {
    double s = 0.0;
    for (std::uint32_t t = 0; t < c.n_threads; ++t) {
      s += std::pow(static_cast<double>(t + 1), -c.thread_exponent);
      thread_cdf[t] = s;
    }
  }

  // Posts
  Rng gen(derive_seed(c.seed, 4));
  const std::string_view types[] = {"offer", "request", "exchange", "tutorial", "other"};
  const auto t0 = *parse_rfc3339("2015-01-01T00:00:00Z");
  const auto width = static_cast<int>(std::to_string(total).size());
  std::uint64_t serial = 0;
  for (std::uint32_t m = 0; m < c.n_members; ++m) {
    std::string member = "u" + std::to_string(m);
    std::vector<std::uint32_t> visited;
    for (std::uint32_t i = 0; i < out.member_posts[m]; ++i) {
      std::uint32_t t;
      if (!visited.empty() && gen.uniform01() < c.repeat_thread) {
        t = visited[gen.uniform_index(visited.size())];
      } else {
        t = static_cast<std::uint32_t>(draw_cdf(thread_cdf, gen));
        visited.push_back(t);
      }
      const std::size_t cls = draw_cdf(tables[m], gen);
      std::string text;
      for (std::uint32_t w = 0; w < c.tokens_per_post; ++w) {
        if (w) text += ' ';
        if (gen.uniform01() < c.signal_fraction) text += class_vocab[cls][gen.uniform_index(c.vocab_per_class)];
        else text += noise[gen.uniform_index(noise.size())];
      }
      std::string pid = std::to_string(++serial);
      pid = "p" + std::string(static_cast<std::size_t>(width) - pid.size(), '0') + pid;
      PostRecord r;
      r.forum = "synthforum";
      r.board = boards[thread_board[t]];
      r.thread_id = "t" + std::to_string(t);
      r.thread_title = thread_title[t];
      r.member_id = member;
      r.post_id = pid;
      r.content = std::move(text);
      r.post_type = std::string(types[gen.uniform_index(5)]);
      r.timestamp = t0 + std::chrono::seconds(static_cast<std::int64_t>(serial) * 60);
      out.truth.emplace_back(pid, out.classes[cls]);
      out.records.push_back(std::move(r));
    }
  }
  return out;
}

inline void write_truth(std::ostream& out, const SynthCorpus& corpus) {
  csv::write_row(out, {"post_id", "class"});
  for (const auto& [p, c] : corpus.truth) csv::write_row(out, {p, c});
}

}  // namespace forumstrat
