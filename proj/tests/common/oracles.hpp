#pragma once

// Independent reference computations. Each one works from raw records or
// plain arrays and shares no code path with the library routine it checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "forumstrat/graph.hpp"

namespace oracle {

using forumstrat::PostRecord;

/// member id -> number of records.
inline std::map<std::string, double> post_counts(const std::vector<PostRecord>& records) {
  std::map<std::string, double> out;
  for (const auto& r : records) out[r.member_id] += 1.0;
  return out;
}

/// member id -> |{thread ids}|.
inline std::map<std::string, double> thread_counts(const std::vector<PostRecord>& records) {
  std::map<std::string, std::set<std::string>> s;
  for (const auto& r : records) s[r.member_id].insert(r.thread_id);
  std::map<std::string, double> out;
  for (const auto& [m, t] : s) out[m] = static_cast<double>(t.size());
  return out;
}

/// Unweighted member-thread graph from raw records. Node names are
/// "m:<id>" and "t:<id>".
struct Bipartite {
  std::vector<std::string> names;
  std::vector<std::set<std::size_t>> adj;
};

inline Bipartite bipartite(const std::vector<PostRecord>& records) {
  Bipartite b;
  std::map<std::string, std::size_t> idx;
  auto node = [&](const std::string& name) {
    auto [it, fresh] = idx.emplace(name, b.names.size());
    if (fresh) {
      b.names.push_back(name);
      b.adj.emplace_back();
    }
    return it->second;
  };
  for (const auto& r : records) {
    const auto m = node("m:" + r.member_id);
    const auto t = node("t:" + r.thread_id);
    b.adj[m].insert(t);
    b.adj[t].insert(m);
  }
  return b;
}

/// member id -> component of the principal eigenvector of the dense
/// adjacency, sign fixed so the entries are non-negative.
inline std::map<std::string, double> dense_eigenvector(const std::vector<PostRecord>& records) {
  const auto b = bipartite(records);
  const auto n = static_cast<Eigen::Index>(b.names.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t i = 0; i < b.adj.size(); ++i) {
    for (auto j : b.adj[i]) a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 1.0;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  Eigen::VectorXd v = es.eigenvectors().col(n - 1);  // eigenvalues ascending
  if (v.sum() < 0) v = -v;
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < b.names.size(); ++i) {
    if (b.names[i].rfind("m:", 0) == 0) out[b.names[i].substr(2)] = v(static_cast<Eigen::Index>(i));
  }
  return out;
}

/// Betweenness by explicit enumeration of every shortest path between every
/// ordered pair (s, t), s != t. Nodes are those of `bipartite`.
inline std::map<std::string, double> enumerated_betweenness(const std::vector<PostRecord>& records) {
  const auto b = bipartite(records);
  const std::size_t n = b.names.size();
  auto bfs = [&](std::size_t s) {
    std::vector<long> d(n, -1);
    std::vector<std::size_t> q{s};
    d[s] = 0;
    for (std::size_t h = 0; h < q.size(); ++h) {
      for (auto u : b.adj[q[h]]) {
        if (d[u] < 0) {
          d[u] = d[q[h]] + 1;
          q.push_back(u);
        }
      }
    }
    return d;
  };
  std::vector<std::vector<long>> dist(n);
  for (std::size_t s = 0; s < n; ++s) dist[s] = bfs(s);

  std::vector<double> bc(n, 0.0);
  std::vector<std::size_t> path;
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t t = 0; t < n; ++t) {
      if (s == t || dist[s][t] < 0) continue;
      // Walk every path s -> t that stays on a shortest route.
      double total = 0.0;
      std::vector<double> through(n, 0.0);
      path.assign(1, s);
      auto walk = [&](auto&& self, std::size_t v) -> void {
        if (v == t) {
          total += 1.0;
          for (std::size_t k = 1; k + 1 < path.size(); ++k) through[path[k]] += 1.0;
          return;
        }
        for (auto u : b.adj[v]) {
          if (dist[s][u] == dist[s][v] + 1 && dist[s][u] + dist[u][t] == dist[s][t]) {
            path.push_back(u);
            self(self, u);
            path.pop_back();
          }
        }
      };
      walk(walk, s);
      for (std::size_t v = 0; v < n; ++v) bc[v] += through[v] / total;
    }
  }
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (b.names[i].rfind("m:", 0) == 0) out[b.names[i].substr(2)] = bc[i];
  }
  return out;
}

/// Discrete power-law exponent by maximum likelihood with the continuous
/// correction of Clauset, Shalizi and Newman: 1 + n / sum ln(x / (xmin - 1/2)).
inline double power_law_mle(const std::vector<std::uint32_t>& xs, std::uint32_t xmin = 1) {
  double s = 0.0;
  std::size_t n = 0;
  for (auto x : xs) {
    if (x < xmin) continue;
    s += std::log(static_cast<double>(x) / (static_cast<double>(xmin) - 0.5));
    ++n;
  }
  return 1.0 + static_cast<double>(n) / s;
}

/// Confusion matrix cm[truth][pred] over labels 0..k-1.
inline std::vector<std::vector<std::uint64_t>> confusion(const std::vector<int>& truth, const std::vector<int>& pred,
                                                          int k) {
  std::vector<std::vector<std::uint64_t>> cm(static_cast<std::size_t>(k), std::vector<std::uint64_t>(k, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) ++cm[truth[i]][pred[i]];
  return cm;
}

/// Per class: (agree, only_a, only_b) by a pairwise scan.
inline std::map<int, std::tuple<std::uint64_t, std::uint64_t, std::uint64_t>> naive_agreement(
    const std::vector<int>& a, const std::vector<int>& b, const std::vector<int>& classes) {
  std::map<int, std::tuple<std::uint64_t, std::uint64_t, std::uint64_t>> out;
  for (int c : classes) {
    std::uint64_t ag = 0, oa = 0, ob = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i] == c && b[i] == c) ++ag;
      if (a[i] == c && b[i] != c) ++oa;
      if (a[i] != c && b[i] == c) ++ob;
    }
    out[c] = {ag, oa, ob};
  }
  return out;
}

/// Fleiss kappa straight from its definition on an items x categories count
/// table.
inline double fleiss_direct(const std::vector<std::vector<int>>& t) {
  const double n_items = static_cast<double>(t.size());
  double r = 0.0;
  for (int c : t[0]) r += c;
  double p_bar = 0.0;
  std::vector<double> col(t[0].size(), 0.0);
  for (const auto& row : t) {
    double agree_pairs = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      agree_pairs += row[j] * (row[j] - 1.0);
      col[j] += row[j];
    }
    p_bar += agree_pairs / (r * (r - 1.0));
  }
  p_bar /= n_items;
  double p_e = 0.0;
  for (double c : col) p_e += (c / (n_items * r)) * (c / (n_items * r));
  return (p_bar - p_e) / (1.0 - p_e);
}

}  // namespace oracle
