#pragma once

#include <Eigen/Dense>
#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "common.hpp"
#include "perm.hpp"

namespace bethe {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

// Integer matrix K with every row and column summing to M; gamma = K / M.
struct FractionalDS {
  int n = 0;
  int M = 0;
  std::vector<int> K;  // row-major

  int at(int i, int j) const { return K[static_cast<std::size_t>(i) * n + j]; }
  int& at(int i, int j) { return K[static_cast<std::size_t>(i) * n + j]; }
  Matrix gamma() const {
    Matrix g(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) g(i, j) = static_cast<double>(at(i, j)) / M;
    return g;
  }
  bool operator<(const FractionalDS& o) const { return std::tie(n, M, K) < std::tie(o.n, o.M, o.K); }
  bool operator==(const FractionalDS& o) const { return n == o.n && M == o.M && K == o.K; }
};

inline FractionalDS make_fds(int M, const std::vector<std::vector<int>>& rows) {
  FractionalDS f;
  f.n = static_cast<int>(rows.size());
  f.M = M;
  for (const auto& r : rows) f.K.insert(f.K.end(), r.begin(), r.end());
  return f;
}

inline bool is_valid_fds(const FractionalDS& f) {
  if (f.n < 1 || f.M < 0 || static_cast<int>(f.K.size()) != f.n * f.n) return false;
  for (int i = 0; i < f.n; ++i) {
    int rs = 0, cs = 0;
    for (int j = 0; j < f.n; ++j) {
      if (f.at(i, j) < 0 || f.at(j, i) < 0) return false;
      rs += f.at(i, j);
      cs += f.at(j, i);
    }
    if (rs != f.M || cs != f.M) return false;
  }
  return true;
}

inline void require_fds(const FractionalDS& f) {
  if (!is_valid_fds(f)) throw validation_error("matrix is not a fractional doubly stochastic matrix with the given M");
}

inline FractionalDS sum_of_permutations(const std::vector<std::vector<int>>& sigmas) {
  FractionalDS f;
  f.n = static_cast<int>(sigmas.front().size());
  f.M = static_cast<int>(sigmas.size());
  f.K.assign(static_cast<std::size_t>(f.n) * f.n, 0);
  for (const auto& s : sigmas)
    for (int i = 0; i < f.n; ++i) ++f.at(i, s[i]);
  return f;
}

// ---------------------------------------------------------------- enumeration

// All n x n non-negative integer matrices with line sums M, in lexicographic
// order of the row-major entries. mask(i,j) == false forces a zero cell.
inline std::vector<FractionalDS> enumerate_gamma(int n, int M, const std::vector<bool>* mask = nullptr,
                                                 std::size_t budget = 10000000) {
  if (n < 1 || M < 0) throw validation_error("enumerate_gamma needs n >= 1 and M >= 0");
  std::vector<FractionalDS> out;
  FractionalDS cur;
  cur.n = n;
  cur.M = M;
  cur.K.assign(static_cast<std::size_t>(n) * n, 0);
  std::vector<int> colrem(n, M);
  auto allowed = [&](int i, int j) { return !mask || (*mask)[static_cast<std::size_t>(i) * n + j]; };
  std::function<void(int, int, int)> rec = [&](int i, int j, int rowrem) {
    if (i == n - 1) {
      for (int c = 0; c < n; ++c)
        if (colrem[c] > 0 && !allowed(i, c)) return;
      for (int c = 0; c < n; ++c) cur.at(i, c) = colrem[c];
      if (out.size() >= budget) throw resource_error("enumeration of fractional doubly stochastic matrices over budget");
      out.push_back(cur);
      return;
    }
    if (j == n - 1) {
      if (rowrem > colrem[j] || (rowrem > 0 && !allowed(i, j))) return;
      cur.at(i, j) = rowrem;
      colrem[j] -= rowrem;
      rec(i + 1, 0, M);
      colrem[j] += rowrem;
      return;
    }
    int hi = std::min(rowrem, colrem[j]);
    if (!allowed(i, j)) hi = 0;
    for (int v = 0; v <= hi; ++v) {
      cur.at(i, j) = v;
      colrem[j] -= v;
      rec(i, j + 1, rowrem - v);
      colrem[j] += v;
    }
  };
  rec(0, 0, M);
  return out;
}

inline std::vector<bool> support_mask(const Matrix& theta) {
  const int n = static_cast<int>(theta.rows());
  std::vector<bool> m(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m[static_cast<std::size_t>(i) * n + j] = theta(i, j) > 0.0;
  return m;
}

// Permutations sigma with K(i, sigma(i)) > 0 for every i, in lexicographic order.
inline std::vector<std::vector<int>> enumerate_support_perms(const FractionalDS& f) {
  std::vector<std::vector<int>> out;
  std::vector<int> sigma(f.n);
  std::vector<bool> used(f.n, false);
  std::function<void(int)> rec = [&](int i) {
    if (i == f.n) {
      out.push_back(sigma);
      return;
    }
    for (int j = 0; j < f.n; ++j) {
      if (used[j] || f.at(i, j) == 0) continue;
      used[j] = true;
      sigma[i] = j;
      rec(i + 1);
      used[j] = false;
    }
  };
  rec(0);
  return out;
}

// K - P_sigma, a matrix of Gamma_{M-1,n}.
inline FractionalDS peel(const FractionalDS& f, const std::vector<int>& sigma) {
  if (f.M < 2) throw validation_error("peeling needs M >= 2");
  if (static_cast<int>(sigma.size()) != f.n) throw validation_error("permutation has the wrong size");
  FractionalDS r = f;
  r.M = f.M - 1;
  for (int i = 0; i < f.n; ++i) {
    if (sigma[i] < 0 || sigma[i] >= f.n || f.at(i, sigma[i]) == 0)
      throw validation_error("permutation is not in the support of gamma");
    --r.at(i, sigma[i]);
  }
  return r;
}

// ---------------------------------------------------------------- fractional support

struct FractionalSupport {
  std::vector<int> R, C;  // 0-based
  int r = 0;
  Matrix gamma_rc;
  Matrix gamma_hat;
  double perm_hat = 1.0;
  std::optional<std::vector<Rational>> gamma_hat_exact;  // when the r-th root is rational
  std::optional<Rational> perm_hat_exact;
};

namespace detail {

inline std::optional<BigInt> integer_root(const BigInt& a, int r) {
  if (a < 0) return std::nullopt;
  if (a == 0 || a == 1) return a;
  double guess = std::pow(a.convert_to<double>(), 1.0 / r);
  BigInt g(static_cast<long long>(std::llround(guess)));
  for (BigInt c = (g > 2 ? g - 2 : BigInt(0)); c <= g + 2; ++c) {
    if (boost::multiprecision::pow(c, r) == a) return c;
  }
  return std::nullopt;
}

inline std::optional<Rational> rational_root(const Rational& q, int r) {
  auto a = integer_root(boost::multiprecision::numerator(q), r);
  auto b = integer_root(boost::multiprecision::denominator(q), r);
  if (!a || !b) return std::nullopt;
  return Rational(*a, *b);
}

template <class V>
V perm_generic(const std::vector<V>& A, int n) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  V total(0);
  do {
    V t(1);
    for (int i = 0; i < n; ++i) t *= A[static_cast<std::size_t>(i) * n + p[i]];
    total += t;
  } while (std::next_permutation(p.begin(), p.end()));
  return total;
}

inline bool near_integer01(double x, double tol) { return std::fabs(x) <= tol || std::fabs(x - 1.0) <= tol; }

inline FractionalSupport support_from(const Matrix& g, double tol) {
  const int n = static_cast<int>(g.rows());
  FractionalSupport s;
  for (int i = 0; i < n; ++i) {
    bool fr = false, fc = false;
    for (int j = 0; j < n; ++j) {
      fr |= !near_integer01(g(i, j), tol);
      fc |= !near_integer01(g(j, i), tol);
    }
    if (fr) s.R.push_back(i);
    if (fc) s.C.push_back(i);
  }
  if (s.R.size() != s.C.size()) throw numerical_error("fractional rows and columns differ in number; not doubly stochastic");
  s.r = static_cast<int>(s.R.size());
  s.gamma_rc.resize(s.r, s.r);
  s.gamma_hat.resize(s.r, s.r);
  if (s.r == 0) return s;
  double logprod = 0.0;
  for (int a = 0; a < s.r; ++a)
    for (int b = 0; b < s.r; ++b) {
      double v = g(s.R[a], s.C[b]);
      s.gamma_rc(a, b) = v;
      logprod += std::log1p(-v);
    }
  double root = std::exp(logprod / s.r);
  for (int a = 0; a < s.r; ++a)
    for (int b = 0; b < s.r; ++b) {
      double v = s.gamma_rc(a, b);
      s.gamma_hat(a, b) = v * (1.0 - v) / root;
    }
  s.perm_hat = perm_exact(s.gamma_hat);
  return s;
}

}  // namespace detail

inline FractionalSupport fractional_support(const Matrix& gamma, double tol = 1e-12) {
  return detail::support_from(gamma, tol);
}

// Exact variant: gamma = K/M is rational, so gamma_hat is rational whenever the
// r-th root of the product is.
inline FractionalSupport fractional_support(const FractionalDS& f) {
  require_fds(f);
  FractionalSupport s = detail::support_from(f.gamma(), 0.0);
  if (s.r == 0) {
    s.perm_hat_exact = Rational(1);
    s.gamma_hat_exact = std::vector<Rational>{};
    return s;
  }
  auto q = [&](int i, int j) { return Rational(f.at(i, j), f.M); };
  Rational prod(1);
  for (int a : s.R)
    for (int b : s.C) prod *= Rational(1) - q(a, b);
  auto root = detail::rational_root(prod, s.r);
  if (!root) return s;
  std::vector<Rational> gh;
  for (int a : s.R)
    for (int b : s.C) gh.push_back(q(a, b) * (Rational(1) - q(a, b)) / *root);
  s.perm_hat_exact = detail::perm_generic(gh, s.r);
  for (int a = 0; a < s.r; ++a)
    for (int b = 0; b < s.r; ++b) s.gamma_hat(a, b) = gh[static_cast<std::size_t>(a) * s.r + b].convert_to<double>();
  s.perm_hat = s.perm_hat_exact->convert_to<double>();
  s.gamma_hat_exact = std::move(gh);
  return s;
}

// ---------------------------------------------------------------- coefficients

inline BigInt big_factorial(int k) {
  BigInt r = 1;
  for (int i = 2; i <= k; ++i) r *= i;
  return r;
}

inline Rational rational_pow(const Rational& b, int e) {
  Rational r(1);
  Rational base = e >= 0 ? b : Rational(1) / b;
  for (int i = 0; i < std::abs(e); ++i) r *= base;
  return r;
}

// Number of M-tuples of permutations whose matrices sum to K, by direct
// enumeration of all (n!)^M tuples.
inline std::map<std::vector<int>, BigInt> coeff_count_table(int n, int M, double budget = 1e7) {
  double total = std::pow(std::exp(std::lgamma(n + 1.0)), M);
  if (total > budget) throw resource_error("direct coefficient enumeration over budget; use the recursion");
  auto perms = all_permutations(n);
  std::map<std::vector<int>, BigInt> table;
  std::vector<int> idx(M, 0);
  std::vector<int> radix(M, static_cast<int>(perms.size()));
  std::vector<int> K(static_cast<std::size_t>(n) * n);
  do {
    std::fill(K.begin(), K.end(), 0);
    for (int m = 0; m < M; ++m)
      for (int i = 0; i < n; ++i) ++K[static_cast<std::size_t>(i) * n + perms[idx[m]][i]];
    table[K] += 1;
  } while (next_index(idx, radix));
  return table;
}

inline BigInt coeff_count_direct(const FractionalDS& f) {
  require_fds(f);
  auto t = coeff_count_table(f.n, f.M);
  auto it = t.find(f.K);
  return it == t.end() ? BigInt(0) : it->second;
}

// C_M(K) = sum over support permutations of C_{M-1}(K - P_sigma), memoized on K.
class CoefficientCache {
 public:
  BigInt count(const FractionalDS& f) {
    if (f.M <= 1) return f.M == 0 ? BigInt(1) : BigInt(1);
    auto it = count_.find(f);
    if (it != count_.end()) return it->second;
    BigInt s = 0;
    for (const auto& sigma : enumerate_support_perms(f)) s += count(peel(f, sigma));
    count_.emplace(f, s);
    return s;
  }

  double bethe(const FractionalDS& f) {
    if (f.M <= 1) return 1.0;
    auto it = bethe_.find(f);
    if (it != bethe_.end()) return it->second;
    double s = 0.0;
    for (const auto& sigma : enumerate_support_perms(f)) s += bethe(peel(f, sigma));
    s /= fractional_support(f.gamma()).perm_hat;
    bethe_.emplace(f, s);
    return s;
  }

  Rational scaled_sinkhorn(const FractionalDS& f) {
    if (f.M <= 1) return Rational(1);
    auto it = scs_.find(f);
    if (it != scs_.end()) return it->second;
    Rational s(0);
    for (const auto& sigma : enumerate_support_perms(f)) s += scaled_sinkhorn(peel(f, sigma));
    std::vector<BigInt> Kb(f.K.begin(), f.K.end());
    Rational perm_gamma = Rational(detail::perm_generic(Kb, f.n)) / rational_pow(Rational(f.M), f.n);
    Rational chi = rational_pow(Rational(f.M, f.M - 1), f.M - 1);
    s /= rational_pow(chi, f.n) * perm_gamma;
    scs_.emplace(f, s);
    return s;
  }

 private:
  std::map<FractionalDS, BigInt> count_;
  std::map<FractionalDS, double> bethe_;
  std::map<FractionalDS, Rational> scs_;
};

inline BigInt coeff_count(const FractionalDS& f) {
  require_fds(f);
  CoefficientCache c;
  return c.count(f);
}

// (M!)^{2n - n^2} prod (M - K)! / K!
inline Rational coeff_bethe_exact(const FractionalDS& f) {
  require_fds(f);
  Rational r = rational_pow(Rational(big_factorial(f.M)), 2 * f.n - f.n * f.n);
  for (int k : f.K) r *= Rational(big_factorial(f.M - k), big_factorial(k));
  return r;
}

inline double log_coeff_bethe(const FractionalDS& f) {
  double s = (2.0 * f.n - static_cast<double>(f.n) * f.n) * log_factorial(f.M);
  for (int k : f.K) s += log_factorial(f.M - k) - log_factorial(k);
  return s;
}

inline double coeff_bethe(const FractionalDS& f) { return std::exp(log_coeff_bethe(f)); }

inline double coeff_bethe_recursive(const FractionalDS& f) {
  require_fds(f);
  CoefficientCache c;
  return c.bethe(f);
}

// M^{-nM} (M!)^{2n} / prod K!
inline Rational coeff_scaled_sinkhorn_exact(const FractionalDS& f) {
  require_fds(f);
  Rational r = rational_pow(Rational(f.M), -f.n * f.M) * rational_pow(Rational(big_factorial(f.M)), 2 * f.n);
  for (int k : f.K) r /= Rational(big_factorial(k));
  return r;
}

inline double log_coeff_scaled_sinkhorn(const FractionalDS& f) {
  double s = -static_cast<double>(f.n) * f.M * std::log(static_cast<double>(f.M)) + 2.0 * f.n * log_factorial(f.M);
  for (int k : f.K) s -= log_factorial(k);
  return s;
}

inline double coeff_scaled_sinkhorn(const FractionalDS& f) { return std::exp(log_coeff_scaled_sinkhorn(f)); }

inline Rational coeff_scaled_sinkhorn_recursive(const FractionalDS& f) {
  require_fds(f);
  CoefficientCache c;
  return c.scaled_sinkhorn(f);
}

inline double log_binomial(int n, int k) { return log_factorial(n) - log_factorial(k) - log_factorial(n - k); }

// ---------------------------------------------------------------- bounds

struct CoefficientBounds {
  double ratio_b = 0.0, lo_b = 0.0, hi_b = 0.0;
  double ratio_scs = 0.0, lo_scs = 0.0, hi_scs = 0.0;
  bool bethe_ok = false, scs_ok = false;
};

// 1 <= C/C_B <= 2^{n(M-1)/2};  (M^M/M!)^n (n!/n^n)^{M-1} <= C/C_scS <= (M^M/M!)^n
inline CoefficientBounds check_coefficient_bounds(const FractionalDS& f, const BigInt& count, double rel = 1e-12) {
  CoefficientBounds b;
  const int n = f.n, M = f.M;
  double logc = std::log(count.convert_to<double>());
  b.ratio_b = std::exp(logc - log_coeff_bethe(f));
  b.lo_b = 1.0;
  b.hi_b = std::pow(2.0, 0.5 * n * (M - 1));
  b.ratio_scs = std::exp(logc - log_coeff_scaled_sinkhorn(f));
  double mm = M * std::log(static_cast<double>(M)) - log_factorial(M);
  b.hi_scs = std::exp(n * mm);
  b.lo_scs = std::exp(n * mm + (M - 1) * (log_factorial(n) - n * std::log(static_cast<double>(n))));
  b.bethe_ok = b.ratio_b >= b.lo_b * (1 - rel) && b.ratio_b <= b.hi_b * (1 + rel);
  b.scs_ok = b.ratio_scs >= b.lo_scs * (1 - rel) && b.ratio_scs <= b.hi_scs * (1 + rel);
  return b;
}

// ---------------------------------------------------------------- free energies

inline double energy(const Matrix& theta, const Matrix& gamma) {
  double u = 0.0;
  for (Eigen::Index i = 0; i < gamma.rows(); ++i)
    for (Eigen::Index j = 0; j < gamma.cols(); ++j) {
      if (gamma(i, j) == 0.0) continue;
      if (theta(i, j) <= 0.0) return std::numeric_limits<double>::infinity();
      u -= gamma(i, j) * std::log(theta(i, j));
    }
  return u;
}

inline double entropy_bethe(const Matrix& gamma) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < gamma.rows(); ++i)
    for (Eigen::Index j = 0; j < gamma.cols(); ++j) h += -xlogx(gamma(i, j)) + xlogx(1.0 - gamma(i, j));
  return h;
}

inline double entropy_scaled_sinkhorn(const Matrix& gamma) {
  double h = -static_cast<double>(gamma.rows());
  for (Eigen::Index i = 0; i < gamma.rows(); ++i)
    for (Eigen::Index j = 0; j < gamma.cols(); ++j) h -= xlogx(gamma(i, j));
  return h;
}

// Limiting normalized log-count for n = 2: binary entropy of gamma(0,1).
inline double entropy_gibbs_n2(const Matrix& gamma) {
  if (gamma.rows() != 2) throw validation_error("the closed-form Gibbs entropy is only available for n = 2");
  double p = gamma(0, 1);
  return -xlogx(p) - xlogx(1.0 - p);
}

struct EntropyValues {
  double U = 0, H_B = 0, F_B = 0, H_scS = 0, F_scS = 0;
  std::optional<double> H_G;
};

inline EntropyValues entropy_functions(const Matrix& theta, const Matrix& gamma) {
  EntropyValues v;
  v.U = energy(theta, gamma);
  v.H_B = entropy_bethe(gamma);
  v.F_B = v.U - v.H_B;
  v.H_scS = entropy_scaled_sinkhorn(gamma);
  v.F_scS = v.U - v.H_scS;
  if (gamma.rows() == 2) v.H_G = entropy_gibbs_n2(gamma);
  return v;
}

// ---------------------------------------------------------------- n = 2 triangles

inline FractionalDS gamma_n2(int k1, int k2) { return make_fds(k1 + k2, {{k1, k2}, {k2, k1}}); }

inline std::string rational_string(const Rational& q) {
  std::ostringstream os;
  os << boost::multiprecision::numerator(q);
  if (boost::multiprecision::denominator(q) != 1) os << "/" << boost::multiprecision::denominator(q);
  return os.str();
}

// Rows M, k1, k2, C, C_B, C_scS with exact values.
inline std::string pascal_triangle_csv(int M_max) {
  std::ostringstream os;
  os << "M,k1,k2,C,C_B,C_scS\n";
  CoefficientCache cache;
  for (int M = 1; M <= M_max; ++M)
    for (int k2 = 0; k2 <= M; ++k2) {
      FractionalDS f = gamma_n2(M - k2, k2);
      os << M << ',' << (M - k2) << ',' << k2 << ',' << cache.count(f) << ',' << rational_string(coeff_bethe_exact(f))
         << ',' << rational_string(coeff_scaled_sinkhorn_exact(f)) << '\n';
    }
  return os.str();
}

}  // namespace bethe
