#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "common.hpp"
#include "graph.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace bethe {

// msg[e][0] is the message arriving at edges[e].u, msg[e][1] the one arriving
// at edges[e].v. Each is a vector over the edge's symbols.
template <class T>
struct MessageVector {
  std::vector<std::array<std::vector<T>, 2>> msg;

  std::vector<T>& at(int e, int side) { return msg[e][side]; }
  const std::vector<T>& at(int e, int side) const { return msg[e][side]; }

  // message on edge e arriving at node f
  const std::vector<T>& into(const Graph<T>& g, int e, int f) const { return msg[e][g.edges[e].u == f ? 0 : 1]; }
};

template <class T>
MessageVector<T> uniform_messages(const Graph<T>& g) {
  MessageVector<T> m;
  m.msg.resize(g.num_edges());
  for (int e = 0; e < g.num_edges(); ++e) {
    int s = g.symbols(e);
    if constexpr (is_complex_v<T>) {
      // x = x' diagonal, trace one: the identity Choi shape normalized to sum 1
      int d = g.edges[e].alphabet;
      std::vector<T> v(s, T(0));
      for (int x = 0; x < d; ++x) v[pair_symbol(d, x, x)] = T(1.0 / d);
      m.msg[e][0] = v;
      m.msg[e][1] = v;
    } else {
      m.msg[e][0].assign(s, T(1.0 / s));
      m.msg[e][1].assign(s, T(1.0 / s));
    }
  }
  return m;
}

template <class T>
T vector_sum(const std::vector<T>& v) {
  T s(0);
  for (const T& x : v) s += x;
  return s;
}

// Classical: i.i.d. uniform [0,1] entries. Double-edge: a random Gram matrix
// G G^H, so the message stays Hermitian PSD. Both are normalized to sum 1.
template <class T>
std::vector<T> random_message(const Graph<T>& g, int e, Rng& rng) {
  int s = g.symbols(e);
  std::vector<T> v(s);
  if constexpr (is_complex_v<T>) {
    int d = g.edges[e].alphabet;
    Eigen::MatrixXcd G(d, d);
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) G(a, b) = rng.complex_normal();
    Eigen::MatrixXcd C = G * G.adjoint();
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) v[pair_symbol(d, a, b)] = C(a, b);
  } else {
    for (auto& x : v) x = rng.uniform();
  }
  T k = vector_sum(v);
  if (absval(k) == 0.0) {
    for (auto& x : v) x = T(0);
    v[0] = T(1);
    return v;
  }
  for (auto& x : v) x /= k;
  return v;
}

template <class T>
MessageVector<T> random_messages(const Graph<T>& g, Rng& rng) {
  MessageVector<T> m;
  m.msg.resize(g.num_edges());
  for (int e = 0; e < g.num_edges(); ++e) {
    m.msg[e][0] = random_message(g, e, rng);
    m.msg[e][1] = random_message(g, e, rng);
  }
  return m;
}

template <class T>
bool is_forest(const Graph<T>& g) {
  std::vector<int> p(g.num_nodes);
  std::iota(p.begin(), p.end(), 0);
  std::function<int(int)> find = [&](int a) { return p[a] == a ? a : p[a] = find(p[a]); };
  for (const auto& e : g.edges) {
    int a = find(e.u), b = find(e.v);
    if (a == b) return false;
    p[a] = b;
  }
  return true;
}

// Unnormalized outgoing messages of factor f: out[k] goes out along slot k.
template <class T>
std::vector<std::vector<T>> factor_outgoing(const Graph<T>& g, int f, const MessageVector<T>& mu) {
  const auto& fac = g.factors[f];
  const std::size_t deg = fac.edges.size();
  std::vector<const std::vector<T>*> in(deg);
  for (std::size_t k = 0; k < deg; ++k) in[k] = &mu.into(g, fac.edges[k], f);
  std::vector<std::vector<T>> out(deg);
  for (std::size_t k = 0; k < deg; ++k) out[k].assign(fac.radix[k], T(0));
  std::vector<int> x(deg);
  std::vector<T> pre(deg + 1), suf(deg + 1);
  fac.for_each_nonzero([&](std::size_t idx, const T& val) {
    std::size_t r = idx;
    for (int k = static_cast<int>(deg) - 1; k >= 0; --k) {
      x[k] = static_cast<int>(r % static_cast<std::size_t>(fac.radix[k]));
      r /= static_cast<std::size_t>(fac.radix[k]);
    }
    pre[0] = T(1);
    for (std::size_t k = 0; k < deg; ++k) pre[k + 1] = pre[k] * (*in[k])[x[k]];
    suf[deg] = T(1);
    for (int k = static_cast<int>(deg) - 1; k >= 0; --k) suf[k] = suf[k + 1] * (*in[k])[x[k]];
    for (std::size_t k = 0; k < deg; ++k) out[k][x[k]] += val * pre[k] * suf[k + 1];
  });
  return out;
}

struct SpaOptions {
  double damping = -1.0;  // negative: 0 on forests, 0.3 otherwise
  int max_iters = 10000;
  double fp_tol = 1e-10;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  double zero_tol = 1e-14;  // |Z_e| at or below this counts as zero
  bool check_invariants = false;
};

template <class T>
struct SpaReport {
  bool converged = false;
  int iterations = 0;
  double residual = std::numeric_limits<double>::infinity();
  int rerandomizations = 0;
  int near_zero_normalizers = 0;
  std::vector<T> Ze;
  std::vector<T> Zf;
  std::optional<T> Zbspa;
  double damping = 0.0;
  // best_fixed_point only: one entry per start (uniform first)
  struct Candidate {
    bool converged;
    double residual;
    std::optional<double> value;
  };
  std::vector<Candidate> candidates;
  int chosen = -1;
};

// One flooding step without damping. Returns false if some normalizer vanished.
template <class T>
bool spa_step(const Graph<T>& g, const MessageVector<T>& mu, MessageVector<T>& next, int* near_zero = nullptr) {
  next.msg.resize(g.num_edges());
  bool ok = true;
  for (int f = 0; f < g.num_nodes; ++f) {
    auto out = factor_outgoing(g, f, mu);
    const auto& fac = g.factors[f];
    for (std::size_t k = 0; k < fac.edges.size(); ++k) {
      int e = fac.edges[k];
      int side = g.edges[e].u == f ? 1 : 0;  // computed at f, arrives at the other end
      T kappa = vector_sum(out[k]);
      if (absval(kappa) <= 1e-300) {
        ok = false;
        next.msg[e][side] = out[k];
        continue;
      }
      if constexpr (is_complex_v<T>) {
        if (near_zero && std::fabs(kappa.real()) < 1e-12 * absval(kappa)) ++*near_zero;
      }
      for (auto& v : out[k]) v /= kappa;
      next.msg[e][side] = std::move(out[k]);
    }
  }
  return ok;
}

template <class T>
double message_distance(const MessageVector<T>& a, const MessageVector<T>& b) {
  double r = 0.0;
  for (std::size_t e = 0; e < a.msg.size(); ++e)
    for (int s = 0; s < 2; ++s)
      for (std::size_t i = 0; i < a.msg[e][s].size(); ++i) r = std::max(r, absval(a.msg[e][s][i] - b.msg[e][s][i]));
  return r;
}

template <class T>
T edge_partition(const Graph<T>& g, const MessageVector<T>& mu, int e) {
  T z(0);
  for (int x = 0; x < g.symbols(e); ++x) z += mu.msg[e][0][x] * mu.msg[e][1][x];
  return z;
}

template <class T>
T node_partition(const Graph<T>& g, const MessageVector<T>& mu, int f) {
  const auto& fac = g.factors[f];
  T z(0);
  std::vector<const std::vector<T>*> in;
  for (int e : fac.edges) in.push_back(&mu.into(g, e, f));
  fac.for_each_nonzero([&](std::size_t idx, const T& val) {
    T p = val;
    std::size_t r = idx;
    for (int k = static_cast<int>(fac.edges.size()) - 1; k >= 0; --k) {
      p *= (*in[k])[r % static_cast<std::size_t>(fac.radix[k])];
      r /= static_cast<std::size_t>(fac.radix[k]);
    }
    z += p;
  });
  return z;
}

// prod_f Z_f / prod_e Z_e
template <class T>
T pseudo_dual_bethe(const Graph<T>& g, const MessageVector<T>& mu, double zero_tol = 1e-14) {
  T num(1), den(1);
  for (int e = 0; e < g.num_edges(); ++e) {
    T ze = edge_partition(g, mu, e);
    if (absval(ze) <= zero_tol)
      throw degenerate_error("degenerate fixed point: Z_e vanishes on edge " + std::to_string(g.edges[e].id));
    den *= ze;
  }
  for (int f = 0; f < g.num_nodes; ++f) num *= node_partition(g, mu, f);
  return num / den;
}

// Real value of a pseudo-dual Bethe or partition value, discarding a small imaginary part.
inline double real_bethe_value(double z, double = 1e-10) { return z; }
inline double real_bethe_value(cplx z, double tol = 1e-10) {
  if (std::fabs(z.imag()) > tol * (1.0 + std::abs(z))) throw numerical_error("Bethe value has non-negligible imaginary part");
  return z.real();
}

template <class T>
void fill_report_partitions(const Graph<T>& g, const MessageVector<T>& mu, SpaReport<T>& rep, double zero_tol) {
  rep.Ze.clear();
  rep.Zf.clear();
  bool ok = true;
  for (int e = 0; e < g.num_edges(); ++e) {
    rep.Ze.push_back(edge_partition(g, mu, e));
    if (absval(rep.Ze.back()) <= zero_tol) ok = false;
  }
  for (int f = 0; f < g.num_nodes; ++f) rep.Zf.push_back(node_partition(g, mu, f));
  rep.Zbspa.reset();
  if (ok) {
    T num(1), den(1);
    for (const T& z : rep.Zf) num *= z;
    for (const T& z : rep.Ze) den *= z;
    rep.Zbspa = num / den;
  }
}

template <class T>
void check_message_invariants(const Graph<T>& g, const MessageVector<T>& mu, double tol) {
  for (int e = 0; e < g.num_edges(); ++e)
    for (int s = 0; s < 2; ++s) {
      const auto& v = mu.msg[e][s];
      if (absval(vector_sum(v) - T(1)) > 1e-9) throw numerical_error("message lost normalization");
      if constexpr (is_complex_v<T>) {
        int d = g.edges[e].alphabet;
        Eigen::MatrixXcd C(d, d);
        for (int a = 0; a < d; ++a)
          for (int b = 0; b < d; ++b) C(a, b) = v[pair_symbol(d, a, b)];
        if ((C - C.adjoint()).cwiseAbs().maxCoeff() > tol) throw numerical_error("message lost Hermitian structure");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (C + C.adjoint()), Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -tol * std::max(1.0, C.trace().real()))
          throw numerical_error("message lost positive semidefiniteness");
      } else {
        for (const T& x : v)
          if (x < -tol) throw numerical_error("message entry became negative");
      }
    }
}

template <class T>
std::pair<MessageVector<T>, SpaReport<T>> spa_run(const Graph<T>& g, const MessageVector<T>* init,
                                                  const SpaOptions& opt = {}) {
  Rng rng(opt.seed, opt.stream);
  MessageVector<T> mu = init ? *init : uniform_messages(g);
  SpaReport<T> rep;
  double lambda = opt.damping >= 0.0 ? opt.damping : (is_forest(g) ? 0.0 : 0.3);
  rep.damping = lambda;
  MessageVector<T> next;
  for (int it = 1; it <= opt.max_iters; ++it) {
    bool ok = spa_step(g, mu, next, &rep.near_zero_normalizers);
    rep.iterations = it;
    if (!ok) {
      // a scaling factor vanished: restart from fresh random messages
      ++rep.rerandomizations;
      mu = random_messages(g, rng);
      continue;
    }
    for (std::size_t e = 0; e < next.msg.size(); ++e)
      for (int s = 0; s < 2; ++s)
        for (std::size_t i = 0; i < next.msg[e][s].size(); ++i) {
          T v = (1.0 - lambda) * next.msg[e][s][i] + lambda * mu.msg[e][s][i];
          if (!finite(v)) throw numerical_error("non-finite message entry");
          next.msg[e][s][i] = v;
        }
    rep.residual = message_distance(next, mu);
    std::swap(mu, next);
    if (opt.check_invariants) check_message_invariants(g, mu, 1e-9);
    if (rep.residual <= opt.fp_tol) {
      rep.converged = true;
      break;
    }
  }
  fill_report_partitions(g, mu, rep, opt.zero_tol);
  return {std::move(mu), std::move(rep)};
}

template <class T>
std::pair<MessageVector<T>, SpaReport<T>> spa_run(const Graph<T>& g, const SpaOptions& opt = {}) {
  return spa_run(g, static_cast<const MessageVector<T>*>(nullptr), opt);
}

// Uniform start plus `restarts` random starts; keeps the converged fixed point
// with the largest Bethe value. A heuristic for the maximizing fixed point.
template <class T>
std::pair<MessageVector<T>, SpaReport<T>> best_fixed_point(const Graph<T>& g, int restarts = 16,
                                                           std::uint64_t seed = 0, SpaOptions opt = {},
                                                           int threads = 1) {
  if (restarts < 1) throw validation_error("restarts must be at least 1");
  const std::size_t n = static_cast<std::size_t>(restarts) + 1;
  std::vector<MessageVector<T>> mus(n);
  std::vector<SpaReport<T>> reps(n);
  parallel_for(n, threads, [&](std::size_t i) {
    SpaOptions o = opt;
    o.seed = seed;
    o.stream = 2 * i + 1;
    if (i == 0) {
      auto r = spa_run(g, o);
      mus[i] = std::move(r.first);
      reps[i] = std::move(r.second);
    } else {
      Rng init_rng(seed, 2 * i);
      auto init = random_messages(g, init_rng);
      auto r = spa_run(g, &init, o);
      mus[i] = std::move(r.first);
      reps[i] = std::move(r.second);
    }
  });
  int best = -1;
  double best_val = -std::numeric_limits<double>::infinity();
  double best_res = std::numeric_limits<double>::infinity();
  std::vector<typename SpaReport<T>::Candidate> cands;
  for (std::size_t i = 0; i < n; ++i) {
    typename SpaReport<T>::Candidate c{reps[i].converged, reps[i].residual, std::nullopt};
    if (reps[i].Zbspa) c.value = re(*reps[i].Zbspa);
    cands.push_back(c);
    best_res = std::min(best_res, reps[i].residual);
    if (reps[i].converged && c.value && *c.value > best_val) {
      best_val = *c.value;
      best = static_cast<int>(i);
    }
  }
  if (best < 0) {
    std::ostringstream os;
    os << "no SPA start converged (best residual " << best_res << ")";
    throw convergence_error(os.str());
  }
  SpaReport<T> rep = reps[best];
  rep.candidates = std::move(cands);
  rep.chosen = best;
  return {std::move(mus[best]), std::move(rep)};
}

// ---------------------------------------------------------------- beliefs

template <class T>
struct Beliefs {
  std::vector<std::vector<T>> node;  // dense over each factor's table
  std::vector<std::vector<T>> edge;
};

template <class T>
Beliefs<T> beliefs(const Graph<T>& g, const MessageVector<T>& mu) {
  Beliefs<T> b;
  for (int f = 0; f < g.num_nodes; ++f) {
    const auto& fac = g.factors[f];
    std::vector<T> t(fac.full_size, T(0));
    T kappa(0);
    fac.for_each_nonzero([&](std::size_t idx, const T& val) {
      T p = val;
      std::size_t r = idx;
      for (int k = static_cast<int>(fac.edges.size()) - 1; k >= 0; --k) {
        p *= mu.into(g, fac.edges[k], f)[r % static_cast<std::size_t>(fac.radix[k])];
        r /= static_cast<std::size_t>(fac.radix[k]);
      }
      t[idx] = p;
      kappa += p;
    });
    if (absval(kappa) <= 1e-300) throw degenerate_error("node belief normalizer vanishes at node " + std::to_string(f));
    for (auto& v : t) v /= kappa;
    b.node.push_back(std::move(t));
  }
  for (int e = 0; e < g.num_edges(); ++e) {
    std::vector<T> t(g.symbols(e));
    T kappa(0);
    for (int x = 0; x < g.symbols(e); ++x) {
      t[x] = mu.msg[e][0][x] * mu.msg[e][1][x];
      kappa += t[x];
    }
    if (absval(kappa) <= 1e-300) throw degenerate_error("edge belief normalizer vanishes on edge " + std::to_string(g.edges[e].id));
    for (auto& v : t) v /= kappa;
    b.edge.push_back(std::move(t));
  }
  return b;
}

// max |sum_{x: x_e = z} beta_f(x) - beta_e(z)|
template <class T>
double edge_consistency(const Graph<T>& g, const Beliefs<T>& b) {
  double r = 0.0;
  for (int f = 0; f < g.num_nodes; ++f) {
    const auto& fac = g.factors[f];
    for (std::size_t k = 0; k < fac.edges.size(); ++k) {
      int e = fac.edges[k];
      std::vector<T> marg(g.symbols(e), T(0));
      for (std::size_t idx = 0; idx < fac.full_size; ++idx) marg[decode_index(idx, fac.radix)[k]] += b.node[f][idx];
      for (int z = 0; z < g.symbols(e); ++z) r = std::max(r, absval(marg[z] - b.edge[e][z]));
    }
  }
  return r;
}

// F_B = U_B - H_B for classical graphs, from node and edge beliefs.
inline double bethe_free_energy(const Graph<double>& g, const Beliefs<double>& b) {
  double U = 0.0, H = 0.0;
  for (int f = 0; f < g.num_nodes; ++f) {
    const auto& fac = g.factors[f];
    for (std::size_t idx = 0; idx < fac.full_size; ++idx) {
      double p = b.node[f][idx];
      if (p <= 0.0) continue;
      U -= p * std::log(fac.at(idx));
      H -= p * std::log(p);
    }
  }
  for (int e = 0; e < g.num_edges(); ++e)
    for (double p : b.edge[e]) H += xlogx(p);
  return U - H;
}

}  // namespace bethe
