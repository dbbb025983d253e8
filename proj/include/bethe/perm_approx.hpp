#pragma once

#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "coeffs.hpp"
#include "covers.hpp"
#include "parallel.hpp"
#include "perm.hpp"
#include "rng.hpp"
#include "spa.hpp"

namespace bethe {

struct PermResult {
  double value = 0.0;
  std::string method;
  // Sinkhorn
  std::vector<double> r, c;
  double deviation = 0.0;
  int iterations = 0;
  // Bethe via SPA
  Matrix gamma;
  double pseudo_dual = 0.0;
  bool spa_converged = false;
  // degree-M paths
  std::size_t evaluated = 0;
  double stderr_mean = -1.0;  // of the averaged M-th power (MC only)
  double cross_check = std::numeric_limits<double>::quiet_NaN();
};

inline double logsumexp(const std::vector<double>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// ---------------------------------------------------------------- Bethe permanent

struct PermBetheOptions {
  SpaOptions spa;
  double ds_tol = 1e-7;
  double consistency_tol = 1e-7;
};

inline PermResult perm_bethe(const Matrix& theta, const PermBetheOptions& opt = {}) {
  Graph<double> g = build_perm_nfg(theta);
  const int n = static_cast<int>(theta.rows());
  auto [mu, rep] = spa_run(g, opt.spa);
  if (!rep.converged)
    throw convergence_error("SPA on the permanent factor graph did not converge (residual " +
                            std::to_string(rep.residual) + ")");
  PermResult res;
  res.method = "bethe";
  res.spa_converged = true;
  res.iterations = rep.iterations;
  res.gamma = Matrix(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const int e = i * n + j;  // ids equal internal indices here
      double a = mu.msg[e][0][1] * mu.msg[e][1][1];
      double b = mu.msg[e][0][0] * mu.msg[e][1][0];
      // the row factor forbids this edge outright; the message ratio is only residue
      res.gamma(i, j) = theta(i, j) > 0.0 ? a / (a + b) : 0.0;
    }
  for (int i = 0; i < n; ++i) {
    double rs = res.gamma.row(i).sum(), cs = res.gamma.col(i).sum();
    res.deviation = std::max({res.deviation, std::fabs(rs - 1.0), std::fabs(cs - 1.0)});
  }
  if (res.deviation > opt.ds_tol)
    throw numerical_error("Bethe marginals are not doubly stochastic (deviation " + std::to_string(res.deviation) + ")");
  double F = energy(theta, res.gamma) - entropy_bethe(res.gamma);
  res.value = std::exp(-F);
  res.pseudo_dual = pseudo_dual_bethe(g, mu);
  if (std::fabs(res.value - res.pseudo_dual) > opt.consistency_tol * std::fabs(res.pseudo_dual))
    throw numerical_error("Bethe free energy and pseudo-dual value disagree");
  return res;
}

// ---------------------------------------------------------------- scaled Sinkhorn

inline PermResult perm_sinkhorn_scaled(const Matrix& theta, double tol = 1e-12, int max_iters = 100000) {
  require_valid_matrix(theta);
  const int n = static_cast<int>(theta.rows());
  PermResult res;
  res.method = "scs";
  res.r.assign(n, 1.0);
  res.c.assign(n, 1.0);
  Matrix g = theta;
  auto deviation = [&]() {
    double d = 0.0;
    for (int i = 0; i < n; ++i) d = std::max({d, std::fabs(g.row(i).sum() - 1.0), std::fabs(g.col(i).sum() - 1.0)});
    return d;
  };
  int it = 0;
  for (; it < max_iters; ++it) {
    res.deviation = deviation();
    if (res.deviation <= tol) break;
    for (int i = 0; i < n; ++i) {
      double s = g.row(i).sum();
      res.r[i] /= s;
      g.row(i) /= s;
    }
    for (int j = 0; j < n; ++j) {
      double s = g.col(j).sum();
      res.c[j] /= s;
      g.col(j) /= s;
    }
  }
  res.iterations = it;
  if (res.deviation > tol)
    throw convergence_error("Sinkhorn scaling stalled after " + std::to_string(max_iters) +
                            " iterations (deviation " + std::to_string(res.deviation) + ")");
  res.gamma = g;
  double F = energy(theta, g) - entropy_scaled_sinkhorn(g);
  res.value = std::exp(-F);
  double closed = -n;
  for (int i = 0; i < n; ++i) closed -= std::log(res.r[i]) + std::log(res.c[i]);
  res.cross_check = std::exp(closed);
  return res;
}

// ---------------------------------------------------------------- degree-M Bethe

enum class LiftMode { lifting, gauge, mc, coefficients };

struct DegreeMPermOptions {
  LiftMode mode = LiftMode::coefficients;
  std::uint64_t seed = 0;
  std::size_t samples = 2000;
  int threads = 0;
  double lifting_budget = 1e6;
};

// theta lifted by blocks theta(i,j) * P^{(i,j)}.
inline Matrix lift(const Matrix& theta, int M, const std::vector<const std::vector<int>*>& blocks) {
  const int n = static_cast<int>(theta.rows());
  Matrix L = Matrix::Zero(n * M, n * M);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const auto& p = *blocks[static_cast<std::size_t>(i) * n + j];
      for (int a = 0; a < M; ++a) L(i * M + a, j * M + p[a]) = theta(i, j);
    }
  return L;
}

// Sum over Gamma_{M,n}(theta) of theta^{M gamma} C(gamma), with log C given.
template <class LogCoeff>
double log_coefficient_sum(const Matrix& theta, int M, LogCoeff&& logc) {
  auto mask = support_mask(theta);
  auto gammas = enumerate_gamma(static_cast<int>(theta.rows()), M, &mask);
  std::vector<double> terms;
  terms.reserve(gammas.size());
  for (const auto& f : gammas) {
    double t = logc(f);
    for (int i = 0; i < f.n; ++i)
      for (int j = 0; j < f.n; ++j)
        if (f.at(i, j) > 0) t += f.at(i, j) * std::log(theta(i, j));
    terms.push_back(t);
  }
  return logsumexp(terms);
}

inline PermResult perm_bethe_degree_m(const Matrix& theta, int M, const DegreeMPermOptions& opt = {}) {
  require_valid_matrix(theta);
  if (M < 1) throw validation_error("M must be at least 1");
  const int n = static_cast<int>(theta.rows());
  PermResult res;
  if (opt.mode == LiftMode::coefficients) {
    res.method = "coefficient-sum";
    res.value = std::exp(log_coefficient_sum(theta, M, [](const FractionalDS& f) { return log_coeff_bethe(f); }) / M);
    return res;
  }
  if (n * M > kRyserMaxN) throw resource_error("lifted matrix exceeds the permanent size cap");
  const auto perms = all_permutations(M);
  const double fm = static_cast<double>(perms.size());
  std::vector<const std::vector<int>*> ident(static_cast<std::size_t>(n) * n, &perms[0]);

  if (opt.mode == LiftMode::mc) {
    res.method = "lifting-monte-carlo";
    const std::size_t N = opt.samples;
    if (N < 2) throw validation_error("Monte Carlo mode needs at least 2 samples");
    std::vector<double> vals(N);
    parallel_for(N, opt.threads, [&](std::size_t s) {
      Rng rng(opt.seed, s);
      std::vector<const std::vector<int>*> b(static_cast<std::size_t>(n) * n);
      for (auto& p : b) p = &perms[rng.below(perms.size())];
      vals[s] = perm_exact(lift(theta, M, b));
    });
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(N);
    double ss = 0.0;
    for (double v : vals) ss += (v - mean) * (v - mean);
    res.stderr_mean = std::sqrt(ss / static_cast<double>(N - 1) / static_cast<double>(N));
    res.evaluated = N;
    res.value = std::pow(mean, 1.0 / M);
    return res;
  }

  // (full) lifting enumeration, or gauge-fixed: blocks in row 0 and column 0 are the identity
  std::vector<int> free_cells;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (opt.mode == LiftMode::lifting || (i > 0 && j > 0)) free_cells.push_back(i * n + j);
  res.method = opt.mode == LiftMode::lifting ? "lifting-enumeration" : "gauge-fixed-lifting-enumeration";
  double total = std::pow(fm, static_cast<double>(free_cells.size()));
  if (total > opt.lifting_budget)
    throw resource_error("lifting enumeration needs " + std::to_string(static_cast<long double>(total)) +
                         " liftings, over the budget; use the coefficient-sum mode");
  const std::size_t N = static_cast<std::size_t>(std::llround(total));
  std::vector<int> radix(free_cells.size(), static_cast<int>(perms.size()));
  double sum = chunked_sum<double>(
      N, opt.threads,
      [&](std::size_t i) {
        auto b = ident;
        auto d = decode_index(i, radix);
        for (std::size_t k = 0; k < free_cells.size(); ++k) b[free_cells[k]] = &perms[d[k]];
        return perm_exact(lift(theta, M, b));
      },
      64);
  res.evaluated = N;
  res.value = std::pow(sum / static_cast<double>(N), 1.0 / M);
  return res;
}

// ---------------------------------------------------------------- degree-M scaled Sinkhorn

inline PermResult perm_sinkhorn_degree_m(const Matrix& theta, int M) {
  require_valid_matrix(theta);
  if (M < 1) throw validation_error("M must be at least 1");
  const int n = static_cast<int>(theta.rows());
  if (n * M > kRyserMaxN) throw resource_error("Kronecker product exceeds the permanent size cap");
  PermResult res;
  res.method = "scs-degree-m";
  Matrix U = Matrix::Constant(M, M, 1.0 / M);
  res.value = std::pow(perm_exact(kron(theta, U)), 1.0 / M);
  res.cross_check =
      std::exp(log_coefficient_sum(theta, M, [](const FractionalDS& f) { return log_coeff_scaled_sinkhorn(f); }) / M);
  return res;
}

// ---------------------------------------------------------------- degree 2

// (sum_{s1,s2} p(s1) p(s2) 2^{-c(s1 s2^{-1})})^{-1/2}, p(s) = prod theta(i,s(i)) / perm(theta).
inline double perm_ratio_degree2(const Matrix& theta) {
  require_valid_matrix(theta);
  const int n = static_cast<int>(theta.rows());
  if (n > 7) throw resource_error("the degree-2 ratio enumerates S_n squared and is capped at n = 7");
  std::vector<std::vector<int>> sup;
  std::vector<double> w;
  for (const auto& s : all_permutations(n)) {
    double p = 1.0;
    for (int i = 0; i < n; ++i) p *= theta(i, s[i]);
    if (p > 0.0) {
      sup.push_back(s);
      w.push_back(p);
    }
  }
  double perm = 0.0;
  for (double p : w) perm += p;
  double sum = 0.0;
  for (std::size_t a = 0; a < sup.size(); ++a)
    for (std::size_t b = 0; b < sup.size(); ++b) {
      int c = nontrivial_cycles(compose(sup[a], inverse(sup[b])));
      sum += (w[a] / perm) * (w[b] / perm) * std::ldexp(1.0, -c);
    }
  return 1.0 / std::sqrt(sum);
}

// ---------------------------------------------------------------- bound checks

struct PermBounds {
  double ratio_b = 0, lo_b = 1, hi_b = 0;
  double ratio_scs = 0, lo_scs = 0, hi_scs = 0;
  bool bethe_ok = false, scs_ok = false;
};

// 1 <= perm/perm_{B,M} <= (2^{n/2})^{(M-1)/M}
// (M^n/(M!)^{n/M}) (n!/n^n)^{(M-1)/M} <= perm/perm_{scS,M} <= M^n/(M!)^{n/M}
inline PermBounds degree_m_bounds(int n, int M, double perm, double perm_bm, double perm_scsm, double rel = 1e-9) {
  PermBounds b;
  b.ratio_b = perm / perm_bm;
  b.hi_b = std::pow(2.0, 0.5 * n * (M - 1.0) / M);
  double top = n * std::log(static_cast<double>(M)) - n * log_factorial(M) / M;
  b.hi_scs = std::exp(top);
  b.lo_scs = std::exp(top + (M - 1.0) / M * (log_factorial(n) - n * std::log(static_cast<double>(n))));
  b.ratio_scs = perm / perm_scsm;
  b.bethe_ok = b.ratio_b >= b.lo_b * (1 - rel) && b.ratio_b <= b.hi_b * (1 + rel);
  b.scs_ok = b.ratio_scs >= b.lo_scs * (1 - rel) && b.ratio_scs <= b.hi_scs * (1 + rel);
  return b;
}

}  // namespace bethe
