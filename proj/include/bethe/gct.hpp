#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "covers.hpp"
#include "graph.hpp"
#include "lct.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "spa.hpp"

namespace bethe {

struct Topology {
  std::string name;
  int num_nodes = 0;
  std::vector<std::pair<int, int>> edges;
};

// fig1: K4 minus one edge; fig5: K4; theta: 2 nodes with 3 parallel edges; tree3: path.
inline Topology topology_preset(const std::string& name) {
  if (name == "fig1") return {name, 4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {2, 3}}};
  if (name == "fig5") return {name, 4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};
  if (name == "theta") return {name, 2, {{0, 1}, {0, 1}, {0, 1}}};
  if (name == "tree3") return {name, 3, {{0, 1}, {1, 2}}};
  if (name == "cycle3") return {name, 3, {{0, 1}, {0, 2}, {1, 2}}};
  throw validation_error("unknown topology '" + name + "' (expected fig1, fig5, theta, tree3, cycle3)");
}

inline std::vector<Edge> topology_edges(const Topology& t, int alphabet) {
  std::vector<Edge> es;
  for (std::size_t k = 0; k < t.edges.size(); ++k)
    es.push_back({static_cast<int>(k), t.edges[k].first, t.edges[k].second, alphabet});
  return es;
}

inline Eigen::MatrixXcd random_gram(std::size_t D, Rng& rng) {
  Eigen::MatrixXcd G(D, D);
  for (std::size_t a = 0; a < D; ++a)
    for (std::size_t b = 0; b < D; ++b) G(a, b) = rng.complex_normal();
  Eigen::MatrixXcd C = G * G.adjoint();
  return C / C.trace().real();
}

// Choi matrix per node: (1 - coupling) (rho_1 x ... x rho_k) + coupling G G^H / tr,
// every rho_j and G with i.i.d. standard complex Gaussian entries.
// coupling = 1 is the plain Gram ensemble; coupling = 0 decouples all sockets.
inline Graph<cplx> random_denfg(const Topology& top, int alphabet, std::uint64_t seed, double coupling = 1.0) {
  if (!(coupling >= 0.0 && coupling <= 1.0)) throw validation_error("coupling must lie in [0, 1]");
  Graph<cplx> g = make_graph<cplx>(Kind::double_edge, top.num_nodes, topology_edges(top, alphabet));
  for (int f = 0; f < g.num_nodes; ++f) {
    Rng rng(seed, static_cast<std::uint64_t>(f));
    std::size_t D = 1;
    for (int e : g.factors[f].edges) D *= static_cast<std::size_t>(g.edges[e].alphabet);
    Eigen::MatrixXcd C = random_gram(D, rng);
    if (coupling < 1.0) {
      Eigen::MatrixXcd P = Eigen::MatrixXcd::Ones(1, 1);
      for (int e : g.factors[f].edges) {
        Eigen::MatrixXcd r = random_gram(static_cast<std::size_t>(g.edges[e].alphabet), rng);
        Eigen::MatrixXcd K(P.rows() * r.rows(), P.cols() * r.cols());
        for (Eigen::Index a = 0; a < P.rows(); ++a)
          for (Eigen::Index b = 0; b < P.cols(); ++b) K.block(a * r.rows(), b * r.cols(), r.rows(), r.cols()) = P(a, b) * r;
        P = std::move(K);
      }
      C = (1.0 - coupling) * P + coupling * C;
    }
    set_from_choi(g, f, C);
  }
  return g;
}

inline Graph<double> random_snfg(const Topology& top, int alphabet, std::uint64_t seed, double lo = 0.5,
                                 double hi = 1.5) {
  Graph<double> g = make_graph<double>(Kind::classical, top.num_nodes, topology_edges(top, alphabet));
  for (int f = 0; f < g.num_nodes; ++f) {
    Rng rng(seed, static_cast<std::uint64_t>(f));
    std::vector<double> t(g.factors[f].full_size);
    for (auto& v : t) v = rng.uniform(lo, hi);
    g.factors[f].set_dense(std::move(t));
  }
  return g;
}

struct SeriesPoint {
  int M = 1;
  double value = 0.0;
  double stderr_z = -1.0;
  std::string method;
  double rel_error = std::numeric_limits<double>::quiet_NaN();  // (Z_BM - Z*)/Z*
};

struct GctRecord {
  int index = 0;
  std::uint64_t seed = 0;
  bool checkable = false;
  std::string note;
  double z_star = std::numeric_limits<double>::quiet_NaN();
  double z_exact = std::numeric_limits<double>::quiet_NaN();
  double abs_sum_product = std::numeric_limits<double>::quiet_NaN();
  double alpha = std::numeric_limits<double>::quiet_NaN();
  bool condition = false;
  std::vector<SeriesPoint> series;
};

struct GctOptions {
  int restarts = 16;
  std::uint64_t spa_seed = 0;
  SpaOptions spa;
};

// (3/2) Z* > prod_f sum |f-check|; needs Z* > 0.
template <class T>
GctRecord check_condition(const Graph<T>& g, const GctOptions& opt = {}) {
  GctRecord r;
  try {
    auto [mu, rep] = best_fixed_point(g, opt.restarts, opt.spa_seed, opt.spa, 1);
    r.z_star = real_bethe_value(*rep.Zbspa, 1e-8);
    auto lr = lct_transform(g, mu);
    r.abs_sum_product = abs_sum_product(lr.graph);
    r.checkable = true;
    r.condition = r.z_star > 0.0 && 1.5 * r.z_star > r.abs_sum_product;
    if (r.z_star > 0.0) r.alpha = (r.abs_sum_product - r.z_star) / r.z_star;
  } catch (const Error& e) {
    r.checkable = false;
    r.note = e.what();
  }
  return r;
}

struct ExperimentOptions {
  int n_graphs = 50;
  std::string topology = "fig1";
  int alphabet = 2;
  int M_max = 4;
  std::uint64_t seed = 0;
  int mc_from = 4;  // Monte Carlo at this M and above; enumeration below
  std::size_t mc_samples = 2000;
  int threads = 0;
  double coupling = 0.01;
  GctOptions gct;
};

struct ExperimentSummaryRow {
  int M = 0;
  std::string subset;  // "all" or "condition"
  int count = 0;
  double mean_abs_rel = 0.0;
  double std_abs_rel = 0.0;
};

struct ExperimentResult {
  std::vector<GctRecord> records;
  std::vector<ExperimentSummaryRow> summary;
};

inline std::uint64_t graph_seed(std::uint64_t seed, int index) {
  return Rng::mix(seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(index) + 1);
}

inline ExperimentResult convergence_experiment(const ExperimentOptions& opt) {
  const Topology top = topology_preset(opt.topology);
  ExperimentResult out;
  out.records.resize(opt.n_graphs);
  parallel_for(static_cast<std::size_t>(opt.n_graphs), opt.threads, [&](std::size_t i) {
    GctRecord& rec = out.records[i];
    const std::uint64_t s = graph_seed(opt.seed, static_cast<int>(i));
    try {
      Graph<cplx> g = random_denfg(top, opt.alphabet, s, opt.coupling);
      GctOptions go = opt.gct;
      go.spa_seed = s;
      rec = check_condition(g, go);
      rec.index = static_cast<int>(i);
      rec.seed = s;
      rec.z_exact = real_partition_value(partition_function_exact(g), 1e-9);
      SeriesOptions so;
      so.threads = 1;
      so.seed = s;
      so.samples = opt.mc_samples;
      so.mc_from = opt.mc_from;
      so.exact_budget = 1e3;
      for (const auto& est : degree_m_series(g, opt.M_max, so)) {
        SeriesPoint p;
        p.M = est.M;
        p.value = est.value;
        p.stderr_z = est.stderr_z;
        p.method = est.method;
        if (std::isfinite(rec.z_star) && rec.z_star > 0.0) p.rel_error = (est.value - rec.z_star) / rec.z_star;
        rec.series.push_back(p);
      }
    } catch (const Error& e) {
      rec.index = static_cast<int>(i);
      rec.seed = s;
      if (!rec.note.empty()) rec.note += "; ";
      rec.note += e.what();
    }
  });
  for (int M = 1; M <= opt.M_max; ++M)
    for (const char* subset : {"all", "condition"}) {
      std::vector<double> v;
      for (const auto& r : out.records) {
        if (std::string(subset) == "condition" && !r.condition) continue;
        if (static_cast<int>(r.series.size()) < M) continue;
        double x = r.series[M - 1].rel_error;
        if (std::isfinite(x)) v.push_back(std::fabs(x));
      }
      ExperimentSummaryRow row;
      row.M = M;
      row.subset = subset;
      row.count = static_cast<int>(v.size());
      if (!v.empty()) {
        double m = 0.0;
        for (double x : v) m += x;
        m /= static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - m) * (x - m);
        row.mean_abs_rel = m;
        row.std_abs_rel = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
      }
      out.summary.push_back(row);
    }
  return out;
}

// Sorted signed relative errors at degree M with their empirical CDF.
inline std::vector<std::pair<double, double>> empirical_cdf(const ExperimentResult& r, int M) {
  std::vector<double> v;
  for (const auto& rec : r.records)
    if (static_cast<int>(rec.series.size()) >= M && std::isfinite(rec.series[M - 1].rel_error))
      v.push_back(rec.series[M - 1].rel_error);
  std::sort(v.begin(), v.end());
  std::vector<std::pair<double, double>> cdf;
  for (std::size_t k = 0; k < v.size(); ++k)
    cdf.emplace_back(v[k], static_cast<double>(k + 1) / static_cast<double>(v.size()));
  return cdf;
}

// Z_{B,M}^M >= Z*^M (1 - alpha/(1 - alpha)), meaningful for alpha < 1/2.
inline bool lower_bound_chain_holds(const GctRecord& r, int M, double rel = 1e-9) {
  if (!(r.alpha < 0.5) || static_cast<int>(r.series.size()) < M) return false;
  double lhs = std::pow(r.series[M - 1].value, M);
  double rhs = std::pow(r.z_star, M) * (1.0 - r.alpha / (1.0 - r.alpha));
  return lhs >= rhs * (1.0 - rel) - 1e-300;
}

}  // namespace bethe
