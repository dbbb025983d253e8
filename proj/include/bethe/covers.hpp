#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <queue>
#include <string>
#include <vector>

#include "graph.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace bethe {

struct CoverSpec {
  int M = 1;
  std::vector<std::vector<int>> sigma;  // sigma[e][m], one permutation per edge
};

inline CoverSpec identity_cover(int num_edges, int M) {
  CoverSpec s;
  s.M = M;
  std::vector<int> id(M);
  std::iota(id.begin(), id.end(), 0);
  s.sigma.assign(num_edges, id);
  return s;
}

inline bool is_permutation_of(const std::vector<int>& p, int M) {
  if (static_cast<int>(p.size()) != M) return false;
  std::vector<bool> seen(M, false);
  for (int x : p) {
    if (x < 0 || x >= M || seen[x]) return false;
    seen[x] = true;
  }
  return true;
}

// Copy (f, m) is node f*M + m; edge copy (e, m) has index e*M + m and joins
// (u, m) to (v, sigma_e(m)). Local tables are copied unchanged: each copy
// sees its incident edges in the base order.
template <class T>
Graph<T> build_cover(const Graph<T>& g, const CoverSpec& spec) {
  const int M = spec.M;
  if (M < 1) throw validation_error("cover degree M must be at least 1");
  if (static_cast<int>(spec.sigma.size()) != g.num_edges())
    throw validation_error("cover spec needs one permutation per edge");
  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(g.num_edges()) * M);
  for (int e = 0; e < g.num_edges(); ++e) {
    if (!is_permutation_of(spec.sigma[e], M))
      throw validation_error("cover spec entry for edge " + std::to_string(g.edges[e].id) + " is not a permutation");
    const Edge& b = g.edges[e];
    for (int m = 0; m < M; ++m) edges.push_back({e * M + m, b.u * M + m, b.v * M + spec.sigma[e][m], b.alphabet});
  }
  Graph<T> c = make_graph<T>(g.kind, g.num_nodes * M, std::move(edges), false);
  for (int f = 0; f < g.num_nodes; ++f) {
    const Factor<T>& src = g.factors[f];
    for (int m = 0; m < M; ++m) {
      Factor<T>& dst = c.factors[f * M + m];
      dst.sparse = src.sparse;
      dst.dense = src.dense;
      dst.entries = src.entries;
    }
  }
  return c;
}

// New cover obtained by relabeling the copies of each node: copy m of node f
// becomes copy pi[f][m]. The result is isomorphic to the original cover.
inline CoverSpec relabel_cover(const CoverSpec& spec, const std::vector<Edge>& edges,
                               const std::vector<std::vector<int>>& pi) {
  CoverSpec out = spec;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto& pu = pi[edges[e].u];
    const auto& pv = pi[edges[e].v];
    for (int m = 0; m < spec.M; ++m) out.sigma[e][pu[m]] = pv[spec.sigma[e][m]];
  }
  return out;
}

enum class CoverMode { exact, gauge, mc };

inline const char* cover_mode_name(CoverMode m) {
  switch (m) {
    case CoverMode::exact: return "exact-enumeration";
    case CoverMode::gauge: return "gauge-fixed-enumeration";
    default: return "monte-carlo";
  }
}

struct DegreeMEstimate {
  int M = 1;
  double value = 0.0;      // Z_{B,M}
  cplx mean_z{0.0, 0.0};   // average cover partition function, before the root
  std::string method;
  std::size_t samples = 0;  // covers evaluated
  double stderr_z = -1.0;   // of mean_z (MC only), otherwise negative
  double wall_ms = 0.0;
};

struct CoverOptions {
  CoverMode mode = CoverMode::exact;
  std::uint64_t seed = 0;
  std::size_t samples = 2000;
  int threads = 0;
  double enumeration_budget = 1e6;
  EliminationOptions elimination;
};

// Edges that lie on a BFS spanning forest; each component is rooted at its
// lowest node, neighbors are visited in ascending edge order.
template <class T>
std::vector<bool> spanning_forest_edges(const Graph<T>& g) {
  std::vector<bool> tree(g.num_edges(), false), seen(g.num_nodes, false);
  for (int root = 0; root < g.num_nodes; ++root) {
    if (seen[root]) continue;
    seen[root] = true;
    std::queue<int> q;
    q.push(root);
    while (!q.empty()) {
      int f = q.front();
      q.pop();
      for (int e : g.factors[f].edges) {
        int o = g.other_end(e, f);
        if (seen[o]) continue;
        seen[o] = true;
        tree[e] = true;
        q.push(o);
      }
    }
  }
  return tree;
}

template <class T>
T cover_partition(const Graph<T>& g, const CoverSpec& spec, const EliminationOptions& opt = {}) {
  return partition_function_exact(build_cover(g, spec), opt);
}

namespace detail {

inline double root_of_mean(const cplx& mean, int M) {
  double re = mean.real();
  if (re < 0.0) return std::numeric_limits<double>::quiet_NaN();
  return std::pow(re, 1.0 / M);
}

}  // namespace detail

template <class T>
DegreeMEstimate degree_m_bethe(const Graph<T>& g, int M, const CoverOptions& opt = {}) {
  if (M < 1) throw validation_error("M must be at least 1");
  auto t0 = std::chrono::steady_clock::now();
  DegreeMEstimate est;
  est.M = M;
  est.method = cover_mode_name(opt.mode);
  const int E = g.num_edges();

  if (opt.mode == CoverMode::mc) {
    const std::size_t n = opt.samples;
    if (n < 2) throw validation_error("Monte Carlo mode needs at least 2 samples");
    std::vector<cplx> z(n);
    parallel_for(n, opt.threads, [&](std::size_t i) {
      Rng rng(opt.seed, i);
      CoverSpec spec;
      spec.M = M;
      for (int e = 0; e < E; ++e) spec.sigma.push_back(random_permutation(M, rng));
      z[i] = cplx(cover_partition(g, spec, opt.elimination));
    });
    cplx sum(0.0);
    for (const auto& v : z) sum += v;
    cplx mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const auto& v : z) ss += std::norm(v - mean);
    est.mean_z = mean;
    est.stderr_z = std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
    est.samples = n;
  } else {
    std::vector<bool> fixed(E, false);
    if (opt.mode == CoverMode::gauge) fixed = spanning_forest_edges(g);
    std::vector<int> free_edges;
    for (int e = 0; e < E; ++e)
      if (!fixed[e]) free_edges.push_back(e);
    const auto perms = all_permutations(M);
    const double total = std::pow(static_cast<double>(perms.size()), static_cast<double>(free_edges.size()));
    if (total > opt.enumeration_budget) {
      std::string hint = opt.mode == CoverMode::exact ? "gauge-fixed or Monte Carlo mode" : "Monte Carlo mode";
      throw resource_error("cover enumeration needs " + std::to_string(static_cast<long double>(total)) +
                           " covers, over the budget; use " + hint);
    }
    const std::size_t n = static_cast<std::size_t>(std::llround(total));
    std::vector<int> radix(free_edges.size(), static_cast<int>(perms.size()));
    const CoverSpec base = identity_cover(E, M);
    cplx sum = chunked_sum<cplx>(
        n, opt.threads,
        [&](std::size_t i) {
          CoverSpec spec = base;
          auto digits = decode_index(i, radix);
          for (std::size_t k = 0; k < free_edges.size(); ++k) spec.sigma[free_edges[k]] = perms[digits[k]];
          return cplx(cover_partition(g, spec, opt.elimination));
        },
        64);
    est.mean_z = sum / static_cast<double>(n);
    est.samples = n;
  }
  est.value = detail::root_of_mean(est.mean_z, M);
  est.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return est;
}

struct SeriesOptions {
  int threads = 0;
  std::uint64_t seed = 0;
  std::size_t samples = 2000;
  double exact_budget = 1e4;   // use exact enumeration up to this many covers
  double gauge_budget = 1e6;   // then gauge-fixed enumeration up to this many
  int mc_from = 0;             // if > 0, Monte Carlo for every M >= mc_from
  EliminationOptions elimination;
};

template <class T>
int cycle_rank(const Graph<T>& g) {
  auto tree = spanning_forest_edges(g);
  return static_cast<int>(std::count(tree.begin(), tree.end(), false));
}

// Method choice per M: exact if cheap, gauge-fixed if affordable, else MC.
// MC draws for degree M use seed + M so entries of one series never share draws.
template <class T>
std::vector<DegreeMEstimate> degree_m_series(const Graph<T>& g, int M_max, const SeriesOptions& opt = {}) {
  if (M_max < 1) throw validation_error("M_max must be at least 1");
  std::vector<DegreeMEstimate> out;
  const int rank = cycle_rank(g);
  for (int M = 1; M <= M_max; ++M) {
    CoverOptions co;
    co.threads = opt.threads;
    co.samples = opt.samples;
    co.elimination = opt.elimination;
    co.seed = opt.seed + static_cast<std::uint64_t>(M);
    double fm = std::exp(std::lgamma(M + 1.0));
    double n_exact = std::pow(fm, g.num_edges());
    double n_gauge = std::pow(fm, rank);
    if (opt.mc_from > 0 && M >= opt.mc_from) co.mode = CoverMode::mc;
    else if (n_exact <= opt.exact_budget) co.mode = CoverMode::exact;
    else if (n_gauge <= opt.gauge_budget) co.mode = CoverMode::gauge;
    else co.mode = CoverMode::mc;
    co.enumeration_budget = std::max(opt.exact_budget, opt.gauge_budget);
    out.push_back(degree_m_bethe(g, M, co));
  }
  return out;
}

}  // namespace bethe
