#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "common.hpp"
#include "table.hpp"

namespace bethe {

// classical: non-negative real tables; double_edge: complex tables over symbol
// pairs (x, x'), stored with paired index x*d + x'.
enum class Kind { classical, double_edge };

inline const char* kind_name(Kind k) { return k == Kind::classical ? "snfg" : "denfg"; }

struct Edge {
  int id = 0;
  int u = 0, v = 0;  // u < v
  int alphabet = 2;  // |X_e|
};

inline int pair_symbol(int d, int x, int xp) { return x * d + xp; }
inline std::pair<int, int> split_symbol(int d, int s) { return {s / d, s % d}; }

inline std::vector<int> decode_index(std::size_t idx, const std::vector<int>& radix) {
  std::vector<int> digits(radix.size());
  for (int k = static_cast<int>(radix.size()) - 1; k >= 0; --k) {
    digits[k] = static_cast<int>(idx % static_cast<std::size_t>(radix[k]));
    idx /= static_cast<std::size_t>(radix[k]);
  }
  return digits;
}

inline std::size_t encode_index(const std::vector<int>& digits, const std::vector<int>& radix) {
  std::size_t idx = 0;
  for (std::size_t k = 0; k < radix.size(); ++k) idx = idx * static_cast<std::size_t>(radix[k]) + digits[k];
  return idx;
}

// Local function over the incident edges in ascending edge order. Large,
// very sparse tables are held as (index, value) pairs.
template <class T>
struct Factor {
  int node = 0;
  std::vector<int> edges;
  std::vector<int> radix;
  std::size_t full_size = 1;
  bool sparse = false;
  std::vector<T> dense;
  std::vector<std::pair<std::size_t, T>> entries;

  T at(std::size_t idx) const {
    if (!sparse) return dense[idx];
    auto it = std::lower_bound(entries.begin(), entries.end(), idx,
                               [](const std::pair<std::size_t, T>& a, std::size_t b) { return a.first < b; });
    return (it != entries.end() && it->first == idx) ? it->second : T(0);
  }

  template <class F>
  void for_each_nonzero(F&& fn) const {
    if (sparse) {
      for (const auto& [i, v] : entries) fn(i, v);
    } else {
      for (std::size_t i = 0; i < dense.size(); ++i)
        if (dense[i] != T(0)) fn(i, dense[i]);
    }
  }

  std::size_t nnz() const {
    if (sparse) return entries.size();
    return static_cast<std::size_t>(std::count_if(dense.begin(), dense.end(), [](const T& v) { return v != T(0); }));
  }

  std::vector<T> to_dense() const {
    if (!sparse) return dense;
    std::vector<T> d(full_size, T(0));
    for (const auto& [i, v] : entries) d[i] = v;
    return d;
  }

  int slot(int e) const {
    auto it = std::find(edges.begin(), edges.end(), e);
    return it == edges.end() ? -1 : static_cast<int>(it - edges.begin());
  }

  void set_dense(std::vector<T> values) {
    dense = std::move(values);
    entries.clear();
    sparse = false;
    compact();
  }

  void set_sparse(std::vector<std::pair<std::size_t, T>> nz) {
    std::sort(nz.begin(), nz.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    entries = std::move(nz);
    dense.clear();
    sparse = true;
  }

  // Dense tables above 4096 entries with at most 1% support switch to sparse.
  void compact() {
    if (sparse || dense.size() <= 4096) return;
    std::size_t nz = nnz();
    if (nz * 100 > dense.size()) return;
    std::vector<std::pair<std::size_t, T>> nzl;
    for (std::size_t i = 0; i < dense.size(); ++i)
      if (dense[i] != T(0)) nzl.emplace_back(i, dense[i]);
    set_sparse(std::move(nzl));
  }
};

template <class T>
struct Graph {
  Kind kind = Kind::classical;
  int num_nodes = 0;
  std::vector<Edge> edges;
  std::vector<Factor<T>> factors;

  int symbols(int e) const { return kind == Kind::classical ? edges[e].alphabet : edges[e].alphabet * edges[e].alphabet; }
  int num_edges() const { return static_cast<int>(edges.size()); }
  int other_end(int e, int node) const { return edges[e].u == node ? edges[e].v : edges[e].u; }
};

// Builds the skeleton: sorts edges by id and attaches incident lists. Every
// factor starts as the all-ones table.
template <class T>
Graph<T> make_graph(Kind kind, int num_nodes, std::vector<Edge> edges, bool fill_ones = true) {
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const Edge& e = edges[i];
    if (i > 0 && edges[i - 1].id == e.id) throw validation_error("duplicate edge id " + std::to_string(e.id));
    if (e.u == e.v) throw validation_error("edge " + std::to_string(e.id) + " has identical endpoints");
    if (e.u > e.v) throw validation_error("edge " + std::to_string(e.id) + " endpoints must satisfy i < j");
    if (e.u < 0 || e.v >= num_nodes) throw validation_error("edge " + std::to_string(e.id) + " endpoint out of range");
    if (e.alphabet < 1) throw validation_error("edge " + std::to_string(e.id) + " has empty alphabet");
  }
  Graph<T> g;
  g.kind = kind;
  g.num_nodes = num_nodes;
  g.edges = std::move(edges);
  g.factors.resize(num_nodes);
  for (int f = 0; f < num_nodes; ++f) g.factors[f].node = f;
  for (int e = 0; e < g.num_edges(); ++e) {
    g.factors[g.edges[e].u].edges.push_back(e);
    g.factors[g.edges[e].v].edges.push_back(e);
  }
  for (auto& fac : g.factors) {
    fac.radix.clear();
    fac.full_size = 1;
    for (int e : fac.edges) {
      fac.radix.push_back(g.symbols(e));
      fac.full_size *= static_cast<std::size_t>(g.symbols(e));
    }
    if (fill_ones) fac.dense.assign(fac.full_size, T(1));
  }
  return g;
}

// ---------------------------------------------------------------- Choi matrices

// Rows x_{df}, columns x'_{df}, both lexicographic over incident edges.
template <class T>
Eigen::MatrixXcd choi_matrix(const Graph<T>& g, int node) {
  const Factor<T>& f = g.factors[node];
  std::vector<int> base;
  std::size_t dim = 1;
  for (int e : f.edges) {
    base.push_back(g.edges[e].alphabet);
    dim *= static_cast<std::size_t>(g.edges[e].alphabet);
  }
  Eigen::MatrixXcd C(dim, dim);
  std::vector<int> xs(base.size()), xp(base.size()), paired(base.size());
  for (std::size_t r = 0; r < dim; ++r) {
    xs = decode_index(r, base);
    for (std::size_t c = 0; c < dim; ++c) {
      xp = decode_index(c, base);
      for (std::size_t k = 0; k < base.size(); ++k) paired[k] = pair_symbol(base[k], xs[k], xp[k]);
      C(r, c) = cplx(f.at(encode_index(paired, f.radix)));
    }
  }
  return C;
}

template <class T>
void set_from_choi(Graph<T>& g, int node, const Eigen::MatrixXcd& C) {
  Factor<T>& f = g.factors[node];
  std::vector<int> base;
  for (int e : f.edges) base.push_back(g.edges[e].alphabet);
  std::vector<T> table(f.full_size, T(0));
  for (std::size_t idx = 0; idx < f.full_size; ++idx) {
    auto paired = decode_index(idx, f.radix);
    std::vector<int> xs(base.size()), xp(base.size());
    for (std::size_t k = 0; k < base.size(); ++k) std::tie(xs[k], xp[k]) = split_symbol(base[k], paired[k]);
    cplx v = C(encode_index(xs, base), encode_index(xp, base));
    if constexpr (is_complex_v<T>) table[idx] = v;
    else table[idx] = v.real();
  }
  f.set_dense(std::move(table));
}

// ---------------------------------------------------------------- validation

struct NodeReport {
  int node = 0;
  double hermitian_dev = 0.0;
  double min_eig = 0.0;
  double trace = 0.0;
  double min_value = 0.0;
};

struct ValidationReport {
  bool accepted = true;
  bool structural_ok = true;
  std::vector<std::string> errors;
  std::vector<NodeReport> nodes;
  bool connected = true;
  int offending_node = -1;
};

struct ValidationOptions {
  bool strict = true;          // double-edge: require PSD Choi matrices
  bool allow_negative = false;  // classical: permit signed tables (transformed graphs)
  Tolerances tol;
};

template <class T>
ValidationReport validate_graph(const Graph<T>& g, const ValidationOptions& opt = {}) {
  ValidationReport rep;
  auto fail = [&](int node, const std::string& msg) {
    rep.accepted = false;
    rep.errors.push_back(msg);
    if (rep.offending_node < 0) rep.offending_node = node;
  };
  if (static_cast<int>(g.factors.size()) != g.num_nodes) {
    rep.structural_ok = false;
    fail(-1, "factor count does not match node count");
    return rep;
  }
  for (int f = 0; f < g.num_nodes; ++f) {
    const auto& fac = g.factors[f];
    std::size_t expect = 1;
    for (int e : fac.edges) expect *= static_cast<std::size_t>(g.symbols(e));
    std::size_t have = fac.sparse ? fac.full_size : fac.dense.size();
    if (expect != have || fac.full_size != expect) {
      rep.structural_ok = false;
      std::ostringstream os;
      os << "node " << f << ": table has " << have << " entries, expected " << expect;
      fail(f, os.str());
    }
    if (fac.sparse)
      for (const auto& [i, v] : fac.entries)
        if (i >= fac.full_size) {
          rep.structural_ok = false;
          fail(f, "node " + std::to_string(f) + ": sparse index out of range");
          break;
        }
  }
  for (int e = 0; e < g.num_edges(); ++e) {
    const Edge& ed = g.edges[e];
    if (ed.u >= ed.v || ed.u < 0 || ed.v >= g.num_nodes || ed.alphabet < 1) {
      rep.structural_ok = false;
      fail(-1, "edge " + std::to_string(ed.id) + " is malformed");
    }
  }
  if (!rep.structural_ok) return rep;

  for (int f = 0; f < g.num_nodes; ++f) {
    NodeReport nr;
    nr.node = f;
    const auto& fac = g.factors[f];
    if (g.kind == Kind::classical) {
      double mn = 0.0;
      bool first = true;
      bool bad = false;
      auto check = [&](T v) {
        if (!finite(v) || std::fabs(im(v)) > 0.0) bad = true;
        double r = re(v);
        if (first || r < mn) mn = r;
        first = false;
      };
      if (fac.sparse) {
        if (fac.entries.size() < fac.full_size) check(T(0));
        for (const auto& kv : fac.entries) check(kv.second);
      } else {
        for (const T& v : fac.dense) check(v);
      }
      nr.min_value = mn;
      if (bad) fail(f, "node " + std::to_string(f) + ": non-finite or complex value in classical table");
      if (!opt.allow_negative && mn < 0.0) fail(f, "node " + std::to_string(f) + ": negative value in classical table");
    } else {
      Eigen::MatrixXcd C = choi_matrix(g, f);
      nr.hermitian_dev = (C - C.adjoint()).cwiseAbs().maxCoeff();
      nr.trace = C.trace().real();
      Eigen::MatrixXcd H = 0.5 * (C + C.adjoint());
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H, Eigen::EigenvaluesOnly);
      nr.min_eig = es.eigenvalues().minCoeff();
      if (nr.hermitian_dev > opt.tol.hermitian) {
        std::ostringstream os;
        os << "node " << f << ": Choi matrix not Hermitian (max deviation " << nr.hermitian_dev << ")";
        fail(f, os.str());
      } else if (opt.strict && nr.min_eig < -opt.tol.psd * std::max(1.0, std::fabs(nr.trace))) {
        std::ostringstream os;
        os << "node " << f << ": Choi matrix not PSD (min eigenvalue " << nr.min_eig << ")";
        fail(f, os.str());
      }
    }
    rep.nodes.push_back(nr);
  }

  std::vector<int> comp(g.num_nodes);
  std::iota(comp.begin(), comp.end(), 0);
  std::function<int(int)> find = [&](int a) { return comp[a] == a ? a : comp[a] = find(comp[a]); };
  for (const auto& e : g.edges) comp[find(e.u)] = find(e.v);
  for (int f = 1; f < g.num_nodes; ++f)
    if (find(f) != find(0)) rep.connected = false;
  return rep;
}

template <class T>
void require_valid(const Graph<T>& g, const ValidationOptions& opt = {}) {
  auto rep = validate_graph(g, opt);
  if (!rep.accepted) throw validation_error(rep.errors.front());
}

// ---------------------------------------------------------------- evaluation

// Configuration: one symbol per edge (paired index for double-edge graphs).
using Configuration = std::vector<int>;

template <class T>
T local_value(const Graph<T>& g, int node, const Configuration& c) {
  const auto& fac = g.factors[node];
  std::size_t idx = 0;
  for (std::size_t k = 0; k < fac.edges.size(); ++k)
    idx = idx * static_cast<std::size_t>(fac.radix[k]) + static_cast<std::size_t>(c[fac.edges[k]]);
  return fac.at(idx);
}

template <class T>
T global_value(const Graph<T>& g, const Configuration& c) {
  T v(1);
  for (int f = 0; f < g.num_nodes; ++f) v *= local_value(g, f, c);
  return v;
}

template <class T>
double configuration_count(const Graph<T>& g) {
  double n = 1.0;
  for (int e = 0; e < g.num_edges(); ++e) n *= g.symbols(e);
  return n;
}

// Lexicographic over edges in declared order, last edge fastest.
template <class T>
void for_each_configuration(const Graph<T>& g, const std::function<void(const Configuration&)>& fn,
                            double cap = 1e7) {
  if (configuration_count(g) > cap) throw resource_error("configuration count exceeds enumeration cap");
  std::vector<int> radix(g.num_edges());
  for (int e = 0; e < g.num_edges(); ++e) radix[e] = g.symbols(e);
  Configuration c(g.num_edges(), 0);
  do {
    fn(c);
  } while (next_index(c, radix));
}

template <class T>
std::vector<Configuration> enumerate_configurations(const Graph<T>& g, double cap = 1e7) {
  std::vector<Configuration> out;
  for_each_configuration(g, [&](const Configuration& c) { out.push_back(c); }, cap);
  return out;
}

template <class T>
std::vector<Table<T>> factor_tables(const Graph<T>& g) {
  std::vector<Table<T>> ts;
  for (const auto& f : g.factors) {
    Table<T> t;
    t.vars = f.edges;
    t.card = f.radix;
    t.data = f.to_dense();
    ts.push_back(std::move(t));
  }
  return ts;
}

template <class T>
std::vector<int> variable_cards(const Graph<T>& g) {
  std::vector<int> c(g.num_edges());
  for (int e = 0; e < g.num_edges(); ++e) c[e] = g.symbols(e);
  return c;
}

// Z by variable elimination with greedy min-fill ordering.
template <class T>
T partition_function_exact(const Graph<T>& g, const EliminationOptions& opt = {}, EliminationStats* stats = nullptr) {
  return contract_all(factor_tables(g), variable_cards(g), opt, stats);
}

// Strict-sense double-edge graphs have real non-negative Z; returns Re Z after
// checking the imaginary part.
inline double real_partition_value(cplx z, double tol = 1e-10) {
  if (std::fabs(z.imag()) > tol * (1.0 + std::abs(z)) || z.real() < -tol)
    throw numerical_error("partition function is not real non-negative within tolerance");
  return z.real();
}

inline double real_partition_value(double z, double = 1e-10) { return z; }

}  // namespace bethe
