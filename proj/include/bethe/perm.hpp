#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "common.hpp"
#include "graph.hpp"

namespace bethe {

using Matrix = Eigen::MatrixXd;

constexpr int kRyserMaxN = 24;
constexpr int kNaiveMaxN = 10;

// Ryser inclusion-exclusion, subsets visited in Gray-code order.
// Row sums are kept in long double to limit cancellation.
inline double perm_exact(const Matrix& A) {
  const int n = static_cast<int>(A.rows());
  if (A.cols() != n) throw validation_error("permanent needs a square matrix");
  if (n > kRyserMaxN) throw resource_error("Ryser permanent is capped at n = " + std::to_string(kRyserMaxN));
  if (n == 0) return 1.0;
  std::vector<long double> row(n, 0.0L);
  long double total = 0.0L;
  std::uint64_t gray = 0;
  const std::uint64_t count = std::uint64_t(1) << n;
  for (std::uint64_t k = 1; k < count; ++k) {
    int j = __builtin_ctzll(k);
    std::uint64_t bit = std::uint64_t(1) << j;
    long double sgn = (gray & bit) ? -1.0L : 1.0L;
    gray ^= bit;
    for (int i = 0; i < n; ++i) row[i] += sgn * A(i, j);
    long double p = 1.0L;
    for (int i = 0; i < n && p != 0.0L; ++i) p *= row[i];
    int size = __builtin_popcountll(gray);
    total += ((n - size) % 2 == 0) ? p : -p;
  }
  return static_cast<double>(total);
}

// Sum over all n! permutations.
inline double perm_naive(const Matrix& A) {
  const int n = static_cast<int>(A.rows());
  if (n > kNaiveMaxN) throw resource_error("naive permanent is capped at n = " + std::to_string(kNaiveMaxN));
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  long double total = 0.0L;
  do {
    long double t = 1.0L;
    for (int i = 0; i < n; ++i) t *= A(i, p[i]);
    total += t;
  } while (std::next_permutation(p.begin(), p.end()));
  return static_cast<double>(total);
}

inline Matrix kron(const Matrix& A, const Matrix& B) {
  Matrix K(A.rows() * B.rows(), A.cols() * B.cols());
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j) K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
  return K;
}

inline Matrix permutation_matrix(const std::vector<int>& sigma) {
  const int n = static_cast<int>(sigma.size());
  Matrix P = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) P(i, sigma[i]) = 1.0;
  return P;
}

// Kuhn's augmenting paths over the positive entries.
inline bool has_positive_permutation(const Matrix& A, std::vector<int>* match_out = nullptr) {
  const int n = static_cast<int>(A.rows());
  std::vector<int> col_of_row(n, -1), row_of_col(n, -1);
  std::function<bool(int, std::vector<bool>&)> augment = [&](int i, std::vector<bool>& vis) {
    for (int j = 0; j < n; ++j) {
      if (A(i, j) <= 0.0 || vis[j]) continue;
      vis[j] = true;
      if (row_of_col[j] < 0 || augment(row_of_col[j], vis)) {
        row_of_col[j] = i;
        col_of_row[i] = j;
        return true;
      }
    }
    return false;
  };
  for (int i = 0; i < n; ++i) {
    std::vector<bool> vis(n, false);
    if (!augment(i, vis)) return false;
  }
  if (match_out) *match_out = col_of_row;
  return true;
}

inline void require_valid_matrix(const Matrix& A) {
  if (A.rows() != A.cols() || A.rows() == 0) throw validation_error("matrix must be square and non-empty");
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
      if (!std::isfinite(A(i, j))) throw validation_error("matrix has a non-finite entry");
      if (A(i, j) < 0.0) throw validation_error("matrix has a negative entry");
    }
  if (!has_positive_permutation(A))
    throw validation_error("standing assumption violated: no permutation with positive product");
}

// Row node i is node i, column node j is node n + j; edge (i, j) has id i*n + j
// and is binary. Row factor i equals sqrt(theta(i,j)) when exactly edge (i, j)
// is active, zero otherwise; column factors likewise.
inline Graph<double> build_perm_nfg(const Matrix& theta) {
  require_valid_matrix(theta);
  const int n = static_cast<int>(theta.rows());
  std::vector<Edge> edges;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) edges.push_back({i * n + j, i, n + j, 2});
  Graph<double> g = make_graph<double>(Kind::classical, 2 * n, std::move(edges), false);
  for (int f = 0; f < 2 * n; ++f) {
    std::vector<std::pair<std::size_t, double>> nz;
    for (int k = 0; k < n; ++k) {
      double t = f < n ? theta(f, k) : theta(k, f - n);
      if (t > 0.0) nz.emplace_back(std::size_t(1) << (n - 1 - k), std::sqrt(t));
    }
    g.factors[f].set_sparse(std::move(nz));
  }
  return g;
}

// Number of cycles of length > 1.
inline int nontrivial_cycles(const std::vector<int>& sigma) {
  const int n = static_cast<int>(sigma.size());
  std::vector<bool> seen(n, false);
  int c = 0;
  for (int i = 0; i < n; ++i) {
    if (seen[i]) continue;
    int len = 0;
    for (int j = i; !seen[j]; j = sigma[j]) {
      seen[j] = true;
      ++len;
    }
    if (len > 1) ++c;
  }
  return c;
}

inline std::vector<int> compose(const std::vector<int>& a, const std::vector<int>& b) {  // (a o b)(i) = a(b(i))
  std::vector<int> r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[b[i]];
  return r;
}

inline std::vector<int> inverse(const std::vector<int>& a) {
  std::vector<int> r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[a[i]] = static_cast<int>(i);
  return r;
}

}  // namespace bethe
