#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "graph.hpp"
#include "spa.hpp"

namespace bethe {

// Per-edge change of basis. Mi is M_{e,u}, Mj is M_{e,v}; both are s x s,
// row x (original symbol), column x-check, stored row-major.
template <class T>
struct EdgeTransform {
  int edge = 0;
  int symbols = 0;
  std::vector<T> Mi, Mj;
  T zeta_i{1}, zeta_j{1}, chi_i{1}, chi_j{1}, delta_i{1}, delta_j{1}, eps_i{0}, eps_j{0};
  T Ze{0};
  T beta0{0};
  bool beta_one_branch = false;
  double residual_rows = 0.0;  // max |sum_xc Mi(x,xc) Mj(x',xc) - [x=x']|
  double residual_cols = 0.0;  // max |sum_x Mi(x,xc) Mj(x,xc') - [xc=xc']|

  T mi(int x, int xc) const { return Mi[static_cast<std::size_t>(x) * symbols + xc]; }
  T mj(int x, int xc) const { return Mj[static_cast<std::size_t>(x) * symbols + xc]; }
};

struct LctOptions {
  // zeta_i = s Z^{-1/2}, zeta_j = Z^{-1/2}/s, likewise for chi and delta
  double zeta_split = 1.0;
  double chi_split = 1.0;
  double delta_split = 1.0;
  // below this |1 - beta_e(0)| the non-symmetric closed form for delta, eps is used
  double beta_one_tol = 1e-6;
  double zero_tol = 1e-14;
  double lct_tol = 1e-9;
};

template <class T>
struct LctResult {
  Graph<T> graph;
  std::vector<EdgeTransform<T>> edges;
};

namespace detail {

template <class T>
T tsqrt(const T& x) {
  using std::sqrt;
  return sqrt(x);
}

template <class T>
void fill_matrix(std::vector<T>& M, int s, const std::vector<T>& own, const std::vector<T>& other, T zeta, T chi,
                 T delta, T eps) {
  M.assign(static_cast<std::size_t>(s) * s, T(0));
  for (int x = 0; x < s; ++x) M[static_cast<std::size_t>(x) * s] = zeta * own[x];
  for (int xc = 1; xc < s; ++xc) M[xc] = zeta * chi * (-other[xc]);
  for (int x = 1; x < s; ++x)
    for (int xc = 1; xc < s; ++xc)
      M[static_cast<std::size_t>(x) * s + xc] = zeta * chi * ((x == xc ? delta : T(0)) + eps * own[x] * other[xc]);
}

template <class T>
void constraint_residuals(EdgeTransform<T>& t) {
  const int s = t.symbols;
  double r1 = 0.0, r2 = 0.0;
  for (int a = 0; a < s; ++a)
    for (int b = 0; b < s; ++b) {
      T p(0), q(0);
      for (int k = 0; k < s; ++k) {
        p += t.mi(a, k) * t.mj(b, k);
        q += t.mi(k, a) * t.mj(k, b);
      }
      T id = a == b ? T(1) : T(0);
      r1 = std::max(r1, absval(p - id));
      r2 = std::max(r2, absval(q - id));
    }
  t.residual_rows = r1;
  t.residual_cols = r2;
}

}  // namespace detail

template <class T>
EdgeTransform<T> edge_transform(const Graph<T>& g, const MessageVector<T>& mu, int e, const LctOptions& opt = {}) {
  EdgeTransform<T> t;
  t.edge = e;
  const int s = g.symbols(e);
  t.symbols = s;
  const auto& mi = mu.msg[e][0];  // arriving at u
  const auto& mj = mu.msg[e][1];  // arriving at v
  T Z(0);
  for (int x = 0; x < s; ++x) Z += mi[x] * mj[x];
  t.Ze = Z;
  if (absval(Z) <= opt.zero_tol)
    throw degenerate_error("untransformable fixed point: Z_e vanishes on edge " + std::to_string(g.edges[e].id));
  const T rz = detail::tsqrt(Z);
  t.zeta_i = T(opt.zeta_split) / rz;
  t.zeta_j = T(1.0 / opt.zeta_split) / rz;
  t.chi_i = T(opt.chi_split);
  t.chi_j = T(1.0 / opt.chi_split);
  t.beta0 = mi[0] * mj[0] / Z;
  const T W = Z - mi[0] * mj[0];  // Z (1 - beta_e(0))
  if (absval(T(1) - t.beta0) > opt.beta_one_tol || absval(mi[0] * mj[0]) <= opt.zero_tol) {
    t.delta_i = T(opt.delta_split) * rz;
    t.delta_j = T(1.0 / opt.delta_split) * rz;
    t.eps_i = (mj[0] - t.delta_i) / W;
    t.eps_j = (mi[0] - t.delta_j) / W;
  } else {
    // delta_i = mu_j(0)/sqrt(beta0), delta_j = mu_i(0)/sqrt(beta0); the eps
    // below solve the corner constraints without dividing by W and reduce to
    // -1/(2 delta_other) at beta0 = 1.
    t.beta_one_branch = true;
    const T rb = detail::tsqrt(t.beta0);
    t.delta_i = mj[0] / rb;
    t.delta_j = mi[0] / rb;
    t.eps_i = -mj[0] / (Z * rb * (T(1) + rb));
    t.eps_j = -mi[0] / (Z * rb * (T(1) + rb));
  }
  detail::fill_matrix(t.Mi, s, mi, mj, t.zeta_i, t.chi_i, t.delta_i, t.eps_i);
  detail::fill_matrix(t.Mj, s, mj, mi, t.zeta_j, t.chi_j, t.delta_j, t.eps_j);
  for (const auto& v : t.Mi)
    if (!finite(v)) throw degenerate_error("transform constants are not finite on edge " + std::to_string(g.edges[e].id));
  detail::constraint_residuals(t);
  double scale = 1.0;
  for (const auto& v : t.Mi) scale = std::max(scale, absval(v));
  for (const auto& v : t.Mj) scale = std::max(scale, absval(v));
  if (t.residual_rows > opt.lct_tol * scale * scale || t.residual_cols > opt.lct_tol * scale * scale)
    throw numerical_error("transform constraints violated on edge " + std::to_string(g.edges[e].id));
  return t;
}

// f-check(xc) = sum_x f(x) prod_e M_{e,f}(x_e, xc_e), one incident edge at a time.
template <class T>
std::vector<T> transform_factor(const Graph<T>& g, int f, const std::vector<EdgeTransform<T>>& tr) {
  const auto& fac = g.factors[f];
  std::vector<T> cur = fac.to_dense();
  const std::size_t deg = fac.edges.size();
  std::size_t stride = fac.full_size;
  for (std::size_t k = 0; k < deg; ++k) {
    const int e = fac.edges[k];
    const EdgeTransform<T>& t = tr[e];
    const bool is_u = g.edges[e].u == f;
    const std::size_t s = static_cast<std::size_t>(fac.radix[k]);
    stride /= s;
    const std::size_t block = s * stride;
    std::vector<T> next(cur.size(), T(0));
    for (std::size_t hi = 0; hi < cur.size(); hi += block)
      for (std::size_t xc = 0; xc < s; ++xc)
        for (std::size_t x = 0; x < s; ++x) {
          T m = is_u ? t.mi(static_cast<int>(x), static_cast<int>(xc)) : t.mj(static_cast<int>(x), static_cast<int>(xc));
          if (m == T(0)) continue;
          const T* src = &cur[hi + x * stride];
          T* dst = &next[hi + xc * stride];
          for (std::size_t lo = 0; lo < stride; ++lo) dst[lo] += m * src[lo];
        }
    cur = std::move(next);
  }
  return cur;
}

template <class T>
LctResult<T> lct_transform(const Graph<T>& g, const MessageVector<T>& mu, const LctOptions& opt = {}) {
  LctResult<T> r;
  for (int e = 0; e < g.num_edges(); ++e) r.edges.push_back(edge_transform(g, mu, e, opt));
  r.graph = g;
  for (int f = 0; f < g.num_nodes; ++f) r.graph.factors[f].set_dense(transform_factor(g, f, r.edges));
  return r;
}

// ---------------------------------------------------------------- verification

// Leaf pruning on the support subgraph; passes iff nothing gets pruned.
template <class T>
bool is_generalized_loop(const Graph<T>& g, const std::vector<bool>& support) {
  std::vector<bool> on = support;
  std::vector<int> deg(g.num_nodes, 0);
  for (int e = 0; e < g.num_edges(); ++e)
    if (on[e]) {
      ++deg[g.edges[e].u];
      ++deg[g.edges[e].v];
    }
  bool pruned = false;
  for (bool again = true; again;) {
    again = false;
    for (int f = 0; f < g.num_nodes; ++f) {
      if (deg[f] != 1) continue;
      for (int e : g.factors[f].edges)
        if (on[e]) {
          on[e] = false;
          --deg[g.edges[e].u];
          --deg[g.edges[e].v];
          pruned = again = true;
          break;
        }
    }
  }
  return !pruned;
}

struct LctCheck {
  std::string name;
  bool applicable = true;
  bool passed = false;
  double residual = 0.0;
  double tol = 0.0;
};

struct LctReport {
  std::vector<LctCheck> checks;
  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const LctCheck& c) { return !c.applicable || c.passed; });
  }
  const LctCheck* find(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }
};

struct LctVerifyOptions {
  double z_tol = 1e-8;
  double weight_one_tol = 1e-9;
  double loop_tol = 1e-9;
  double series_tol = 1e-8;
  double fixed_point_tol = 1e-8;
  double hermitian_tol = 1e-9;
  double constraint_tol = 1e-10;
  double enumeration_cap = 1e6;
};

template <class T>
LctReport verify_lct_properties(const Graph<T>& g, const LctResult<T>& lr, const MessageVector<T>& mu,
                                const LctVerifyOptions& opt = {}) {
  const Graph<T>& gt = lr.graph;
  LctReport rep;
  auto add = [&](std::string name, double residual, double tol, bool applicable = true) {
    rep.checks.push_back({std::move(name), applicable, applicable && residual <= tol, residual, tol});
  };
  auto rel = [](const T& a, const T& b) { return absval(a - b) / std::max(absval(b), 1e-300); };

  double cres = 0.0;
  for (const auto& t : lr.edges) cres = std::max({cres, t.residual_rows, t.residual_cols});
  add("edge_constraints", cres, opt.constraint_tol);

  const T Z = partition_function_exact(g);
  const T Zt = partition_function_exact(gt);
  add("partition_function", rel(Zt, Z), opt.z_tol);

  const T Zb = pseudo_dual_bethe(g, mu);
  const Configuration zero(g.num_edges(), 0);
  const T g0 = global_value(gt, zero);
  add("all_zero_equals_bethe", rel(g0, Zb), opt.z_tol);

  std::vector<double> fmax(g.num_nodes, 0.0);
  double w1 = 0.0;
  for (int f = 0; f < g.num_nodes; ++f) {
    const auto& fac = gt.factors[f];
    for (std::size_t i = 0; i < fac.full_size; ++i) fmax[f] = std::max(fmax[f], absval(fac.at(i)));
    double sc = std::max(fmax[f], 1e-300);
    std::vector<int> x(fac.edges.size(), 0);
    for (std::size_t k = 0; k < fac.edges.size(); ++k)
      for (int v = 1; v < fac.radix[k]; ++v) {
        std::fill(x.begin(), x.end(), 0);
        x[k] = v;
        w1 = std::max(w1, absval(fac.at(encode_index(x, fac.radix))) / sc);
      }
  }
  add("weight_one_vanishes", w1, opt.weight_one_tol);

  double scale = 1.0;
  for (double m : fmax) scale *= std::max(m, 1e-300);
  const bool enumerable = configuration_count(gt) <= opt.enumeration_cap;
  double loop_res = 0.0;
  T series(0);
  if (enumerable) {
    for_each_configuration(
        gt,
        [&](const Configuration& c) {
          std::vector<bool> sup(c.size());
          bool any = false;
          for (std::size_t e = 0; e < c.size(); ++e) any |= (sup[e] = c[e] != 0);
          T v = global_value(gt, c);
          bool loop = is_generalized_loop(gt, sup);
          if (!loop) loop_res = std::max(loop_res, absval(v) / scale);
          else if (any) series += v;
        },
        opt.enumeration_cap);
  }
  add("support_is_generalized_loop", loop_res, opt.loop_tol, enumerable);
  add("loop_series", enumerable ? rel(Zb * (T(1) + series / g0), Z) : 0.0, opt.series_tol, enumerable);

  MessageVector<T> e0;
  e0.msg.resize(gt.num_edges());
  for (int e = 0; e < gt.num_edges(); ++e) {
    std::vector<T> v(gt.symbols(e), T(0));
    v[0] = T(1);
    e0.msg[e][0] = v;
    e0.msg[e][1] = v;
  }
  MessageVector<T> nx;
  bool ok = spa_step(gt, e0, nx);
  add("unit_messages_fixed_point", ok ? message_distance(nx, e0) : std::numeric_limits<double>::infinity(),
      opt.fixed_point_tol);

  if (g.kind == Kind::double_edge) {
    double h = 0.0;
    for (int f = 0; f < gt.num_nodes; ++f) {
      Eigen::MatrixXcd C = choi_matrix(gt, f);
      h = std::max(h, (C - C.adjoint()).cwiseAbs().maxCoeff() / std::max(fmax[f], 1e-300));
    }
    for (const auto& t : lr.edges) {
      const int d = g.edges[t.edge].alphabet;
      double sc = 1.0;
      for (const auto& v : t.Mi) sc = std::max(sc, absval(v));
      for (const auto& v : t.Mj) sc = std::max(sc, absval(v));
      for (int x = 0; x < d; ++x)
        for (int xp = 0; xp < d; ++xp)
          for (int a = 0; a < d; ++a)
            for (int ap = 0; ap < d; ++ap) {
              int r = pair_symbol(d, x, xp), c = pair_symbol(d, a, ap);
              int rT = pair_symbol(d, xp, x), cT = pair_symbol(d, ap, a);
              h = std::max(h, absval(t.mi(r, c) - conj(t.mi(rT, cT))) / sc);
              h = std::max(h, absval(t.mj(r, c) - conj(t.mj(rT, cT))) / sc);
            }
    }
    add("hermitian", h, opt.hermitian_tol);
  } else {
    add("hermitian", 0.0, opt.hermitian_tol, false);
  }
  return rep;
}

// Product over nodes of the absolute table sums of the transformed graph.
template <class T>
double abs_sum_product(const Graph<T>& gt) {
  double p = 1.0;
  for (const auto& fac : gt.factors) {
    double s = 0.0;
    for (std::size_t i = 0; i < fac.full_size; ++i) s += absval(fac.at(i));
    p *= s;
  }
  return p;
}

}  // namespace bethe
