#pragma once

// Per-member centrality over a population's member x thread bipartite graph.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <queue>
#include <string>
#include <string_view>
#include <vector>

#include "forumstrat/error.hpp"
#include "forumstrat/graph.hpp"

namespace forumstrat {

enum class Metric { PostDegree, ThreadDegree, Eigenvector, Betweenness };

inline std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::PostDegree: return "post";
    case Metric::ThreadDegree: return "thread";
    case Metric::Eigenvector: return "eigenvector";
    case Metric::Betweenness: return "betweenness";
  }
  return "post";
}

inline Metric parse_metric(std::string_view s) {
  if (s == "post" || s == "post_degree") return Metric::PostDegree;
  if (s == "thread" || s == "thread_degree") return Metric::ThreadDegree;
  if (s == "eigenvector") return Metric::Eigenvector;
  if (s == "betweenness") return Metric::Betweenness;
  throw ValidationError("unknown metric '" + std::string(s) + "'");
}

struct EigenMeta {
  int iterations = 0;
  double residual = 0.0;
  double lambda_max = 0.0;
  bool converged = false;
};

/// Values are aligned with the population's member rows.
struct CentralityVector {
  Metric metric = Metric::PostDegree;
  std::vector<double> values;
  std::optional<EigenMeta> meta;
};

namespace detail {
inline void require_population(const PopulationGraph& pop) {
  if (pop.member_count() == 0) throw DataError("centrality: empty population");
}
}  // namespace detail

/// Total posts per member: sum_j W[i][j] * A[i][j].
inline CentralityVector post_degree(const PopulationGraph& pop) {
  detail::require_population(pop);
  CentralityVector cv{Metric::PostDegree, std::vector<double>(pop.member_count(), 0.0), {}};
  for (std::size_t i = 0; i < pop.member_count(); ++i) {
    std::uint64_t s = 0;
    for (auto w : pop.row_weights(i)) s += w;
    cv.values[i] = static_cast<double>(s);
  }
  return cv;
}

/// Distinct threads per member: sum_j A[i][j].
inline CentralityVector thread_degree(const PopulationGraph& pop) {
  detail::require_population(pop);
  CentralityVector cv{Metric::ThreadDegree, std::vector<double>(pop.member_count(), 0.0), {}};
  for (std::size_t i = 0; i < pop.member_count(); ++i) {
    cv.values[i] = static_cast<double>(pop.row_threads(i).size());
  }
  return cv;
}

struct EigenOptions {
  double tol = 1e-7;
  int max_iter = 100;
  /// Use W instead of A as edge weights.
  bool weighted = false;
};

struct EigenResult {
  /// Unit L2 norm; members first (row order) then threads (column order).
  std::vector<double> full;
  EigenMeta meta;
};

/// Power iteration on the symmetric bipartite adjacency over members and
/// threads, starting from the all-ones vector.
///
/// The iteration is applied to (B + I): a bipartite B has spectrum symmetric
/// about zero, so plain iteration on B oscillates between the +lambda and
/// -lambda eigenvectors. The shift keeps the eigenvectors and makes
/// lambda_max + 1 strictly dominant. lambda_max is the Rayleigh quotient
/// x'Bx of the final iterate. Convergence: ||x_k - x_{k-1}||_2 < tol.
inline EigenResult eigenvector_full(const PopulationGraph& pop, const EigenOptions& opts = {}) {
  detail::require_population(pop);
  if (!(opts.tol > 0)) throw ValidationError("eigenvector: tol must be > 0");
  if (opts.max_iter < 1) throw ValidationError("eigenvector: max_iter must be >= 1");

  const std::size_t m = pop.member_count();
  const std::size_t n = m + pop.thread_count();

  auto multiply = [&](const std::vector<double>& x, std::vector<double>& y) {
    // y = B x
    std::fill(y.begin(), y.end(), 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const auto cols = pop.row_threads(i);
      const auto ws = pop.row_weights(i);
      double acc = 0.0;
      for (std::size_t k = 0; k < cols.size(); ++k) {
        const double w = opts.weighted ? static_cast<double>(ws[k]) : 1.0;
        const std::size_t t = m + cols[k];
        acc += w * x[t];
        y[t] += w * x[i];
      }
      y[i] += acc;
    }
  };
  auto normalize = [](std::vector<double>& v) {
    double s = 0.0;
    for (double a : v) s += a * a;
    s = std::sqrt(s);
    if (s > 0) for (double& a : v) a /= s;
  };

  EigenResult res;
  std::vector<double> x(n, 1.0), y(n);
  normalize(x);
  for (int it = 1; it <= opts.max_iter; ++it) {
    multiply(x, y);
    for (std::size_t k = 0; k < n; ++k) y[k] += x[k];
    normalize(y);
    double d = 0.0;
    for (std::size_t k = 0; k < n; ++k) d += (y[k] - x[k]) * (y[k] - x[k]);
    x.swap(y);
    res.meta.iterations = it;
    res.meta.residual = std::sqrt(d);
    if (res.meta.residual < opts.tol) {
      res.meta.converged = true;
      break;
    }
  }
  multiply(x, y);
  double rq = 0.0;
  for (std::size_t k = 0; k < n; ++k) rq += x[k] * y[k];
  res.meta.lambda_max = rq;
  res.full = std::move(x);
  return res;
}

/// Member components of eigenvector_full. A non-converged run is returned
/// with meta.converged = false; the caller decides whether to use it.
inline CentralityVector eigenvector(const PopulationGraph& pop, const EigenOptions& opts = {}) {
  auto r = eigenvector_full(pop, opts);
  r.full.resize(pop.member_count());
  return CentralityVector{Metric::Eigenvector, std::move(r.full), r.meta};
}

inline constexpr std::size_t kDefaultBetweennessNodeLimit = 5000;

/// Exact betweenness (Brandes accumulation) over ordered pairs on the
/// unweighted bipartite graph, for every node: members first, then threads.
inline std::vector<double> betweenness_exact_all(const PopulationGraph& pop,
                                                 std::size_t node_limit = kDefaultBetweennessNodeLimit) {
  detail::require_population(pop);
  const std::size_t m = pop.member_count();
  const std::size_t n = m + pop.thread_count();
  if (n > node_limit) {
    throw InfeasibleError("betweenness: graph has " + std::to_string(n) +
                          " nodes, above the limit of " + std::to_string(node_limit) +
                          "; exact all-pairs shortest paths are infeasible at this scale");
  }

  std::vector<std::vector<std::uint32_t>> adj(n);
  for (std::size_t i = 0; i < m; ++i) {
    for (auto c : pop.row_threads(i)) {
      adj[i].push_back(static_cast<std::uint32_t>(m + c));
      adj[m + c].push_back(static_cast<std::uint32_t>(i));
    }
  }

  std::vector<double> bc(n, 0.0), sigma(n), delta(n);
  std::vector<long> dist(n);
  std::vector<std::vector<std::uint32_t>> pred(n);
  std::vector<std::uint32_t> order;
  order.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t v = 0; v < n; ++v) {
      pred[v].clear();
      sigma[v] = 0.0;
      delta[v] = 0.0;
      dist[v] = -1;
    }
    order.clear();
    sigma[s] = 1.0;
    dist[s] = 0;
    std::queue<std::uint32_t> q;
    q.push(static_cast<std::uint32_t>(s));
    while (!q.empty()) {
      const auto v = q.front();
      q.pop();
      order.push_back(v);
      for (auto w : adj[v]) {
        if (dist[w] < 0) {
          dist[w] = dist[v] + 1;
          q.push(w);
        }
        if (dist[w] == dist[v] + 1) {
          sigma[w] += sigma[v];
          pred[w].push_back(v);
        }
      }
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const auto w = *it;
      for (auto v : pred[w]) delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
      if (w != s) bc[w] += delta[w];
    }
  }
  return bc;
}

inline CentralityVector betweenness_exact(const PopulationGraph& pop,
                                          std::size_t node_limit = kDefaultBetweennessNodeLimit) {
  auto all = betweenness_exact_all(pop, node_limit);
  all.resize(pop.member_count());
  return CentralityVector{Metric::Betweenness, std::move(all), {}};
}

struct CentralityOptions {
  EigenOptions eigen;
  std::size_t node_limit = kDefaultBetweennessNodeLimit;
};

inline CentralityVector compute_centrality(const PopulationGraph& pop, Metric metric,
                                           const CentralityOptions& opts = {}) {
  switch (metric) {
    case Metric::PostDegree: return post_degree(pop);
    case Metric::ThreadDegree: return thread_degree(pop);
    case Metric::Eigenvector: return eigenvector(pop, opts.eigen);
    case Metric::Betweenness: return betweenness_exact(pop, opts.node_limit);
  }
  throw ValidationError("unknown metric");
}

}  // namespace forumstrat
