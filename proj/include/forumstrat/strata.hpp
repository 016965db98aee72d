#pragma once

// Post distribution induced by a member centrality metric, log-10 binning
// with the 25/S minimum-mass rule, and proportional/uniform stratified
// sampling over the resulting bins.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "forumstrat/centrality.hpp"
#include "forumstrat/error.hpp"
#include "forumstrat/graph.hpp"
#include "forumstrat/rng.hpp"

namespace forumstrat {

/// Minimum number of posts a bin must be able to contribute to a sample.
inline constexpr std::uint64_t kMinPostsPerBin = 25;

struct Bin {
  /// Exclusive: every post in the bin belongs to a member whose metric value
  /// is strictly less than this (and not less than the previous bin's bound).
  double upper_bound = 0.0;
  std::uint64_t count = 0;
  double mass = 0.0;
  /// Population post indices, ascending.
  std::vector<std::uint32_t> posts;
};

struct InducedDistribution {
  Metric metric = Metric::PostDegree;
  std::vector<Bin> bins;
  std::uint64_t total_posts = 0;
  /// Set once the bins were merged for a target sample size.
  std::optional<std::uint64_t> sample_size;

  /// Bin holding a metric value; values at or above the last bound fall in
  /// the last bin, zeros in the first.
  std::size_t bin_of(double value) const {
    for (std::size_t b = 0; b < bins.size(); ++b) {
      if (value < bins[b].upper_bound) return b;
    }
    return bins.empty() ? 0 : bins.size() - 1;
  }

  std::vector<double> masses() const {
    std::vector<double> m;
    m.reserve(bins.size());
    for (const auto& b : bins) m.push_back(b.mass);
    return m;
  }
};

/// 10^k for integer k, the log-scale bin boundary.
inline double decade(int k) { return std::pow(10.0, k); }

/// Smallest k with value < 10^k. value must be > 0.
inline int decade_index(double value) {
  int k = static_cast<int>(std::floor(std::log10(value))) + 1;
  while (decade(k) <= value) ++k;
  while (k > std::numeric_limits<int>::min() + 1 && decade(k - 1) > value) --k;
  return k;
}

/// Attributes each population post to its author's metric value and bins
/// by integer log-10 boundaries. Empty decades are omitted. Members with
/// value 0 go to the lowest non-empty decade.
inline InducedDistribution induce(const PopulationGraph& pop, const CentralityVector& cv) {
  if (cv.values.size() != pop.member_count()) {
    throw ValidationError("induce: centrality vector does not match the population (" +
                          std::to_string(cv.values.size()) + " values, " +
                          std::to_string(pop.member_count()) + " members)");
  }
  std::optional<int> lowest;
  std::vector<int> member_key(cv.values.size(), 0);
  std::vector<bool> is_zero(cv.values.size(), false);
  for (std::size_t i = 0; i < cv.values.size(); ++i) {
    const double v = cv.values[i];
    if (!(v >= 0) || !std::isfinite(v)) {
      throw DataError("induce: metric value for member '" + pop.member_id(i) +
                      "' is negative or not finite");
    }
    if (v == 0) {
      is_zero[i] = true;
      continue;
    }
    member_key[i] = decade_index(v);
    if (!lowest || member_key[i] < *lowest) lowest = member_key[i];
  }
  if (!lowest) throw DataError("induce: every metric value is zero");
  for (std::size_t i = 0; i < is_zero.size(); ++i) {
    if (is_zero[i]) member_key[i] = *lowest;
  }

  std::map<int, Bin> by_key;
  for (std::uint32_t p = 0; p < pop.post_count(); ++p) {
    auto& bin = by_key[member_key[pop.post_row(p)]];
    bin.posts.push_back(p);
  }
  InducedDistribution d;
  d.metric = cv.metric;
  d.total_posts = pop.post_count();
  for (auto& [k, bin] : by_key) {
    bin.upper_bound = decade(k);
    bin.count = bin.posts.size();
    bin.mass = static_cast<double>(bin.count) / static_cast<double>(d.total_posts);
    d.bins.push_back(std::move(bin));
  }
  return d;
}

/// Merges adjacent bins left to right (ascending metric) until every bin
/// holds at least 25/S of the posts. An underweight final run is folded into
/// its left neighbour. The threshold test is exact: count * S >= 25 * total.
inline InducedDistribution merge_bins(const InducedDistribution& raw, std::uint64_t sample_size) {
  if (sample_size < kMinPostsPerBin) {
    throw ValidationError("merge_bins: sample size must be >= " + std::to_string(kMinPostsPerBin));
  }
  if (raw.total_posts < kMinPostsPerBin) {
    throw DataError("merge_bins: population has " + std::to_string(raw.total_posts) +
                    " posts, fewer than " + std::to_string(kMinPostsPerBin) +
                    "; no valid binning exists");
  }
  auto heavy = [&](std::uint64_t count) {
    return static_cast<unsigned __int128>(count) * sample_size >=
           static_cast<unsigned __int128>(kMinPostsPerBin) * raw.total_posts;
  };

  InducedDistribution out;
  out.metric = raw.metric;
  out.total_posts = raw.total_posts;
  out.sample_size = sample_size;
  Bin acc;
  for (const auto& b : raw.bins) {
    acc.count += b.count;
    acc.posts.insert(acc.posts.end(), b.posts.begin(), b.posts.end());
    acc.upper_bound = b.upper_bound;
    if (heavy(acc.count)) {
      out.bins.push_back(std::move(acc));
      acc = Bin{};
    }
  }
  if (acc.count > 0 || out.bins.empty()) {
    if (out.bins.empty()) {
      out.bins.push_back(std::move(acc));
    } else {
      auto& last = out.bins.back();
      last.count += acc.count;
      last.posts.insert(last.posts.end(), acc.posts.begin(), acc.posts.end());
      last.upper_bound = acc.upper_bound;
    }
  }
  for (auto& b : out.bins) {
    std::sort(b.posts.begin(), b.posts.end());
    b.mass = static_cast<double>(b.count) / static_cast<double>(out.total_posts);
  }
  return out;
}

/// sqrt(p (1 - p) / n)
inline double proportion_std_error(double p, std::uint64_t n) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("proportion_std_error: p outside [0, 1]");
  if (n == 0) throw ValidationError("proportion_std_error: n must be >= 1");
  return std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Quotas

/// Largest-remainder apportionment of `total` over bins weighted by counts.
/// Ties on the remainder go to the lower bin index.
inline std::vector<std::uint64_t> proportional_quotas(std::span<const std::uint64_t> counts,
                                                      std::uint64_t total) {
  unsigned __int128 sum = 0;
  for (auto c : counts) sum += c;
  if (sum == 0) throw ValidationError("proportional_quotas: all counts are zero");
  std::vector<std::uint64_t> q(counts.size());
  std::vector<std::pair<unsigned __int128, std::size_t>> rem;
  std::uint64_t assigned = 0;
  for (std::size_t b = 0; b < counts.size(); ++b) {
    const unsigned __int128 scaled = static_cast<unsigned __int128>(counts[b]) * total;
    q[b] = static_cast<std::uint64_t>(scaled / sum);
    rem.emplace_back(scaled % sum, b);
    assigned += q[b];
  }
  std::stable_sort(rem.begin(), rem.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++q[rem[i].second];
  return q;
}

/// floor(total / bins) each, remainder spread over the lowest-index bins.
inline std::vector<std::uint64_t> uniform_quotas(std::size_t bins, std::uint64_t total) {
  if (bins == 0) throw ValidationError("uniform_quotas: no bins");
  std::vector<std::uint64_t> q(bins, total / bins);
  for (std::size_t b = 0; b < total % bins; ++b) ++q[b];
  return q;
}

// ---------------------------------------------------------------------------
// Sampling

enum class Strategy { Proportional, Uniform };

inline std::string_view to_string(Strategy s) {
  return s == Strategy::Proportional ? "proportional" : "uniform";
}

inline Strategy parse_strategy(std::string_view s) {
  if (s == "proportional") return Strategy::Proportional;
  if (s == "uniform") return Strategy::Uniform;
  throw ValidationError("unknown strategy '" + std::string(s) + "'");
}

struct SampleSpec {
  Strategy strategy = Strategy::Proportional;
  std::uint64_t size = 0;
  /// Already-annotated posts (post_id -> label) to include first.
  std::map<std::string, std::string> reuse_pool;
  /// Cap on newly drawn (not reused) posts, i.e. the annotation budget.
  std::optional<std::uint64_t> max_new_posts;
  std::uint64_t seed = 0;
};

struct SampleEntry {
  std::string post_id;
  std::string member_id;
  std::size_t bin = 0;
  bool reused = false;
  /// Population post index.
  std::uint32_t post = 0;
};

struct StratifiedSample {
  std::vector<SampleEntry> entries;
  SampleSpec spec;
  std::vector<std::uint64_t> quotas;
  std::vector<double> achieved_distribution;

  std::size_t reused_count() const {
    return static_cast<std::size_t>(
        std::count_if(entries.begin(), entries.end(), [](const auto& e) { return e.reused; }));
  }
};

/// Draws a stratified sample. Per bin: reuse-pool posts first (ascending
/// post_id), then a seeded uniform draw without replacement from the rest
/// of the bin, with one independent stream per bin.
inline StratifiedSample sample(const PopulationGraph& pop, const InducedDistribution& dist,
                               const SampleSpec& spec) {
  const std::size_t nbins = dist.bins.size();
  if (spec.size == 0) throw ValidationError("sample: size must be > 0");
  if (nbins == 0) throw ValidationError("sample: distribution has no bins");
  if (dist.total_posts != pop.post_count()) {
    throw ValidationError("sample: distribution was not built for this population");
  }
  if (spec.strategy == Strategy::Uniform && spec.size < kMinPostsPerBin * nbins) {
    throw ValidationError("sample: uniform sample of " + std::to_string(spec.size) +
                          " posts cannot give " + std::to_string(kMinPostsPerBin) +
                          " posts to each of " + std::to_string(nbins) + " bins");
  }

  std::vector<std::uint64_t> counts;
  for (const auto& b : dist.bins) counts.push_back(b.count);
  StratifiedSample out;
  out.spec = spec;
  out.quotas = spec.strategy == Strategy::Proportional ? proportional_quotas(counts, spec.size)
                                                       : uniform_quotas(nbins, spec.size);
  for (std::size_t b = 0; b < nbins; ++b) {
    if (out.quotas[b] > dist.bins[b].count) {
      throw DataError("sample: bin " + std::to_string(b) + " (< " +
                      std::to_string(dist.bins[b].upper_bound) + ") holds " +
                      std::to_string(dist.bins[b].count) + " posts, short by " +
                      std::to_string(out.quotas[b] - dist.bins[b].count) + " for its quota of " +
                      std::to_string(out.quotas[b]));
    }
  }

  std::vector<std::uint32_t> bin_of_post(pop.post_count(), 0);
  for (std::size_t b = 0; b < nbins; ++b) {
    for (auto p : dist.bins[b].posts) bin_of_post[p] = static_cast<std::uint32_t>(b);
  }

  std::vector<std::vector<std::pair<std::string, std::uint32_t>>> pool_by_bin(nbins);
  std::vector<bool> in_pool(pop.post_count(), false);
  if (!spec.reuse_pool.empty()) {
    std::unordered_map<std::string_view, std::uint32_t> index;
    index.reserve(pop.post_count());
    for (std::uint32_t p = 0; p < pop.post_count(); ++p) index.emplace(pop.post(p).post_id, p);
    for (const auto& [id, label] : spec.reuse_pool) {
      auto it = index.find(id);
      if (it == index.end()) {
        throw DataError("sample: reuse-pool post '" + id + "' is not in the population");
      }
      pool_by_bin[bin_of_post[it->second]].emplace_back(id, it->second);
      in_pool[it->second] = true;
    }
  }

  std::uint64_t new_posts = 0;
  for (std::size_t b = 0; b < nbins; ++b) {
    const std::uint64_t quota = out.quotas[b];
    auto& pool = pool_by_bin[b];  // already ascending: std::map order
    const std::uint64_t from_pool = std::min<std::uint64_t>(quota, pool.size());
    for (std::uint64_t i = 0; i < from_pool; ++i) {
      const auto p = pool[i].second;
      out.entries.push_back({pool[i].first, pop.member_id(pop.post_row(p)), b, true, p});
    }
    const std::uint64_t need = quota - from_pool;
    if (need == 0) continue;
    std::vector<std::uint32_t> rest;
    rest.reserve(dist.bins[b].posts.size());
    for (auto p : dist.bins[b].posts) {
      if (!in_pool[p]) rest.push_back(p);
    }
    Rng rng(derive_seed(spec.seed, b));
    rng.partial_shuffle(rest, need);
    for (std::uint64_t i = 0; i < need; ++i) {
      const auto p = rest[i];
      out.entries.push_back({pop.post(p).post_id, pop.member_id(pop.post_row(p)), b, false, p});
    }
    new_posts += need;
  }
  if (spec.max_new_posts && new_posts > *spec.max_new_posts) {
    throw DataError("sample: needs " + std::to_string(new_posts) +
                    " newly drawn posts, above the cap of " +
                    std::to_string(*spec.max_new_posts));
  }
  out.achieved_distribution.assign(nbins, 0.0);
  for (const auto& e : out.entries) out.achieved_distribution[e.bin] += 1.0;
  for (auto& a : out.achieved_distribution) a /= static_cast<double>(out.entries.size());
  return out;
}

/// Bin index of every population post.
inline std::vector<std::uint32_t> post_bins(const InducedDistribution& dist) {
  std::vector<std::uint32_t> out(dist.total_posts, 0);
  for (std::size_t b = 0; b < dist.bins.size(); ++b) {
    for (auto p : dist.bins[b].posts) out[p] = static_cast<std::uint32_t>(b);
  }
  return out;
}

inline nlohmann::json distribution_to_json(const InducedDistribution& d) {
  nlohmann::json j;
  j["metric"] = std::string(to_string(d.metric));
  j["total_posts"] = d.total_posts;
  j["sample_size"] = d.sample_size ? nlohmann::json(*d.sample_size) : nlohmann::json(nullptr);
  if (d.sample_size) {
    j["min_mass"] = static_cast<double>(kMinPostsPerBin) / static_cast<double>(*d.sample_size);
  }
  j["bins"] = nlohmann::json::array();
  for (const auto& b : d.bins) {
    j["bins"].push_back({{"upper_bound", b.upper_bound}, {"count", b.count}, {"mass", b.mass}});
  }
  return j;
}

}  // namespace forumstrat
