#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "coeffs.hpp"
#include "graph.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "table.hpp"

namespace bethe {

// counts[x] = number of positions holding symbol x
struct TypeVector {
  int d = 0;
  int M = 0;
  std::vector<int> counts;
  bool operator==(const TypeVector& o) const { return d == o.d && counts == o.counts; }
  bool operator<(const TypeVector& o) const { return counts < o.counts; }
};

inline TypeVector type_of(const std::vector<int>& seq, int d) {
  TypeVector t;
  t.d = d;
  t.M = static_cast<int>(seq.size());
  t.counts.assign(d, 0);
  for (int x : seq) {
    if (x < 0 || x >= d) throw validation_error("symbol outside the alphabet");
    ++t.counts[x];
  }
  return t;
}

// M! / prod counts!
inline BigInt type_class_size(const TypeVector& t) {
  BigInt r = big_factorial(t.M);
  for (int c : t.counts) r /= big_factorial(c);
  return r;
}

// C(d + M - 1, M)
inline BigInt num_types(int d, int M) { return big_factorial(d + M - 1) / (big_factorial(M) * big_factorial(d - 1)); }

inline Rational pe_value(const std::vector<int>& u, const std::vector<int>& v, int d) {
  if (u.size() != v.size()) throw validation_error("sequences must have the same length");
  TypeVector tu = type_of(u, d), tv = type_of(v, d);
  if (!(tu == tv)) return Rational(0);
  return Rational(BigInt(1), type_class_size(tu));
}

// Dense d^M x d^M operator, rows u and columns v in lexicographic order.
inline Matrix pe_matrix(int d, int M) {
  double sz = std::pow(static_cast<double>(d), M);
  if (sz > 64) throw resource_error("P_e is only materialized for d^M <= 64");
  const int n = static_cast<int>(sz);
  std::vector<int> radix(M, d);
  Matrix P(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      P(a, b) = pe_value(decode_index(a, radix), decode_index(b, radix), d).convert_to<double>();
  return P;
}

// All types of length-M sequences over s symbols, and the type index of every sequence.
struct TypeIndex {
  std::vector<TypeVector> types;
  std::vector<int> of_sequence;  // indexed by the lexicographic sequence index
  std::vector<double> class_size;
};

inline TypeIndex build_type_index(int s, int M) {
  TypeIndex ti;
  std::map<std::vector<int>, int> idx;
  std::vector<int> seq(M, 0), radix(M, s);
  do {
    TypeVector t = type_of(seq, s);
    auto it = idx.find(t.counts);
    if (it == idx.end()) {
      it = idx.emplace(t.counts, static_cast<int>(ti.types.size())).first;
      ti.types.push_back(t);
      ti.class_size.push_back(type_class_size(t).convert_to<double>());
    }
    ti.of_sequence.push_back(it->second);
  } while (next_index(seq, radix));
  return ti;
}

// Z_{B,M}^M = sum over all socket assignments of prod_m prod_f f * prod_e P_e.
// P_e is factored through one auxiliary type variable per edge:
// P_e(u, v) = sum_t [type(u) = t] [type(v) = t] / |T_t|.
template <class T>
T zbm_power_via_pe(const Graph<T>& g, int M, const EliminationOptions& opt = {}) {
  if (M < 1) throw validation_error("M must be at least 1");
  const int E = g.num_edges();
  // socket (e, side, m) has variable id (2e + side) M + m; type variable of e is 2EM + e
  auto socket = [&](int e, int side, int m) { return (2 * e + side) * M + m; };
  std::vector<int> card(static_cast<std::size_t>(2 * E * M + E));
  for (int e = 0; e < E; ++e)
    for (int side = 0; side < 2; ++side)
      for (int m = 0; m < M; ++m) card[socket(e, side, m)] = g.symbols(e);
  std::vector<Table<T>> tables;
  for (int f = 0; f < g.num_nodes; ++f) {
    const auto& fac = g.factors[f];
    auto dense = fac.to_dense();
    for (int m = 0; m < M; ++m) {
      Table<T> t;
      for (std::size_t k = 0; k < fac.edges.size(); ++k) {
        int e = fac.edges[k];
        t.vars.push_back(socket(e, g.edges[e].u == f ? 0 : 1, m));
        t.card.push_back(fac.radix[k]);
      }
      t.data = dense;
      tables.push_back(std::move(t));
    }
  }
  std::map<int, TypeIndex> cache;
  for (int e = 0; e < E; ++e) {
    const int s = g.symbols(e);
    if (std::pow(static_cast<double>(s), M) > static_cast<double>(opt.max_entries))
      throw resource_error("type factor for edge " + std::to_string(g.edges[e].id) + " exceeds the budget");
    auto it = cache.find(s);
    if (it == cache.end()) it = cache.emplace(s, build_type_index(s, M)).first;
    const TypeIndex& ti = it->second;
    const int tv = 2 * E * M + e;
    card[tv] = static_cast<int>(ti.types.size());
    for (int side = 0; side < 2; ++side) {
      Table<T> t;
      for (int m = 0; m < M; ++m) {
        t.vars.push_back(socket(e, side, m));
        t.card.push_back(s);
      }
      t.vars.push_back(tv);
      t.card.push_back(card[tv]);
      const std::size_t nt = ti.types.size();
      t.data.assign(ti.of_sequence.size() * nt, T(0));
      for (std::size_t q = 0; q < ti.of_sequence.size(); ++q) {
        int k = ti.of_sequence[q];
        t.data[q * nt + k] = side == 0 ? T(1) : T(1.0 / ti.class_size[k]);
      }
      tables.push_back(std::move(t));
    }
  }
  return contract_all(std::move(tables), card, opt);
}

template <class T>
double zbm_via_pe(const Graph<T>& g, int M, const EliminationOptions& opt = {}) {
  double v = re(zbm_power_via_pe(g, M, opt));
  return v < 0.0 ? std::numeric_limits<double>::quiet_NaN() : std::pow(v, 1.0 / M);
}

// ---------------------------------------------------------------- Fubini-Study

// 2d standard normals, normalized as a real vector, then paired (re, im).
inline std::vector<cplx> fubini_study_sample(int d, Rng& rng) {
  if (d < 1) throw validation_error("dimension must be at least 1");
  std::vector<double> w(2 * static_cast<std::size_t>(d));
  double nrm = 0.0;
  for (auto& x : w) {
    x = rng.normal();
    nrm += x * x;
  }
  nrm = std::sqrt(nrm);
  std::vector<cplx> psi(d);
  for (int x = 0; x < d; ++x) psi[x] = {w[2 * x] / nrm, w[2 * x + 1] / nrm};
  return psi;
}

struct McEstimate {
  cplx mean{0.0, 0.0};
  double stderr_re = 0.0;
  double stderr_im = 0.0;
  std::size_t samples = 0;
};

struct McOptions {
  std::size_t samples = 100000;
  std::uint64_t seed = 0;
  int threads = 0;
  std::size_t chunk = 4096;
  // average each draw with its complex conjugate (the measure is conjugation invariant)
  bool symmetrize = false;
};

// Chunk c draws from stream c, so estimates are independent of the thread count.
inline McEstimate mc_estimate(const McOptions& opt, const std::function<cplx(Rng&)>& draw) {
  if (opt.samples < 2) throw validation_error("Monte Carlo needs at least 2 samples");
  const std::size_t n = opt.samples, ch = opt.chunk;
  const std::size_t nchunks = (n + ch - 1) / ch;
  struct Acc {
    cplx sum{0.0, 0.0};
    double sre = 0.0, sim = 0.0;
  };
  std::vector<Acc> acc(nchunks);
  parallel_for(nchunks, opt.threads, [&](std::size_t c) {
    Rng rng(opt.seed, c);
    Acc a;
    const std::size_t hi = std::min(n, (c + 1) * ch);
    for (std::size_t i = c * ch; i < hi; ++i) {
      cplx v = draw(rng);
      a.sum += v;
      a.sre += v.real() * v.real();
      a.sim += v.imag() * v.imag();
    }
    acc[c] = a;
  });
  Acc t;
  for (const auto& a : acc) {
    t.sum += a.sum;
    t.sre += a.sre;
    t.sim += a.sim;
  }
  McEstimate est;
  const double N = static_cast<double>(n);
  est.samples = n;
  est.mean = t.sum / N;
  double vre = std::max(0.0, (t.sre - N * est.mean.real() * est.mean.real()) / (N - 1));
  double vim = std::max(0.0, (t.sim - N * est.mean.imag() * est.mean.imag()) / (N - 1));
  est.stderr_re = std::sqrt(vre / N);
  est.stderr_im = std::sqrt(vim / N);
  return est;
}

// Phi(u, v) = |B| prod_m psi(u_m) prod_m conj(psi(v_m)) under psi ~ Fubini-Study.
inline McEstimate phi_integral_mc(const std::vector<int>& u, const std::vector<int>& v, int d,
                                  const McOptions& opt = {}) {
  if (u.size() != v.size()) throw validation_error("sequences must have the same length");
  const double B = num_types(d, static_cast<int>(u.size())).convert_to<double>();
  return mc_estimate(opt, [&](Rng& rng) {
    auto psi = fubini_study_sample(d, rng);
    cplx p = B;
    for (std::size_t m = 0; m < u.size(); ++m) p *= psi[u[m]] * std::conj(psi[v[m]]);
    if (opt.symmetrize) p = cplx(p.real(), 0.0);
    return p;
  });
}

// Z_SST,f = sum_x f(x) prod_e psi_{e,f}(x_e), psi on the u side, conj(psi) on the v side.
template <class T>
cplx sst_local(const Graph<T>& g, int f, const std::vector<std::vector<cplx>>& psi) {
  const auto& fac = g.factors[f];
  const std::size_t deg = fac.edges.size();
  cplx z(0.0);
  fac.for_each_nonzero([&](std::size_t idx, const T& val) {
    cplx p = cplx(val);
    std::size_t r = idx;
    for (int k = static_cast<int>(deg) - 1; k >= 0; --k) {
      int e = fac.edges[k];
      int x = static_cast<int>(r % static_cast<std::size_t>(fac.radix[k]));
      r /= static_cast<std::size_t>(fac.radix[k]);
      p *= g.edges[e].u == f ? psi[e][x] : std::conj(psi[e][x]);
    }
    z += p;
  });
  return z;
}

// Estimate of Z_{B,M}^M = prod_e |B_e| * E[prod_f Z_SST,f^M].
template <class T>
McEstimate zbm_via_sst_mc(const Graph<T>& g, int M, const McOptions& opt = {}) {
  if (M < 1) throw validation_error("M must be at least 1");
  double B = 1.0;
  for (int e = 0; e < g.num_edges(); ++e) B *= num_types(g.symbols(e), M).template convert_to<double>();
  return mc_estimate(opt, [&](Rng& rng) {
    std::vector<std::vector<cplx>> psi(g.num_edges());
    for (int e = 0; e < g.num_edges(); ++e) psi[e] = fubini_study_sample(g.symbols(e), rng);
    cplx p = B;
    for (int f = 0; f < g.num_nodes; ++f) p *= std::pow(sst_local(g, f, psi), M);
    if (opt.symmetrize) {
      for (auto& v : psi)
        for (auto& x : v) x = std::conj(x);
      cplx q = B;
      for (int f = 0; f < g.num_nodes; ++f) q *= std::pow(sst_local(g, f, psi), M);
      p = 0.5 * (p + q);
    }
    return p;
  });
}

// Relative residual of sum_l C(k,l) Gamma(l+1/2) Gamma(k-l+1/2) = pi k!, in log space.
inline double gamma_identity_check(int k) {
  if (k < 0) throw validation_error("k must be non-negative");
  const double target = std::log(M_PI) + std::lgamma(k + 1.0);
  double s = 0.0;
  for (int l = 0; l <= k; ++l)
    s += std::exp(log_binomial(k, l) + std::lgamma(l + 0.5) + std::lgamma(k - l + 0.5) - target);
  return std::fabs(s - 1.0);
}

}  // namespace bethe
