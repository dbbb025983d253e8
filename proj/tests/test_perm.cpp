#include "test_util.hpp"

using namespace bethe;
using namespace testutil;

namespace {

Matrix diag(std::initializer_list<double> d) {
  Matrix A = Matrix::Zero(static_cast<Eigen::Index>(d.size()), static_cast<Eigen::Index>(d.size()));
  int i = 0;
  for (double v : d) A(i, i) = v, ++i;
  return A;
}

double fact(int n) { return std::tgamma(n + 1.0); }

// Average of perm over every lifting, written as a plain loop over block choices.
double lifting_average_oracle(const Matrix& theta, int M) {
  const int n = static_cast<int>(theta.rows());
  auto perms = all_permutations(M);
  std::vector<int> pick(n * n, 0);
  double total = 0.0;
  std::size_t count = 0;
  for (;;) {
    Matrix L = Matrix::Zero(n * M, n * M);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int a = 0; a < M; ++a) L(i * M + a, j * M + perms[pick[i * n + j]][a]) = theta(i, j);
    total += naive_perm(L);
    ++count;
    int k = n * n - 1;
    while (k >= 0 && ++pick[k] == static_cast<int>(perms.size())) pick[k--] = 0;
    if (k < 0) break;
  }
  return total / static_cast<double>(count);
}

}  // namespace

TEST(Perm, RyserMatchesNaive) {
  Rng rng(1);
  for (int n = 1; n <= 7; ++n)
    for (int rep = 0; rep < 5; ++rep) {
      Matrix A = random_matrix(n, rng, -1.0, 1.0);
      EXPECT_NEAR(perm_exact(A), naive_perm(A), 1e-10 * std::max(1.0, std::fabs(naive_perm(A))));
      EXPECT_NEAR(perm_naive(A), naive_perm(A), 1e-12 * std::max(1.0, std::fabs(naive_perm(A))));
    }
}

TEST(Perm, KnownValues) {
  EXPECT_DOUBLE_EQ(perm_exact(Matrix::Identity(5, 5)), 1.0);
  EXPECT_DOUBLE_EQ(perm_exact(Matrix::Ones(3, 3)), 6.0);
  Matrix A(2, 2);
  A << 1, 2, 3, 4;
  EXPECT_DOUBLE_EQ(perm_exact(A), 10.0);
}

TEST(Perm, ScalingAndLinePermutations) {
  Rng rng(2);
  for (int n = 2; n <= 6; ++n) {
    Matrix A = random_matrix(n, rng);
    double p = perm_exact(A);
    EXPECT_NEAR(perm_exact(2.5 * A), std::pow(2.5, n) * p, 1e-10 * std::pow(2.5, n) * p);
    auto r = random_permutation(n, rng), c = random_permutation(n, rng);
    Matrix B = permutation_matrix(r) * A * permutation_matrix(c);
    EXPECT_NEAR(perm_exact(B), p, 1e-12 * p);
  }
}

TEST(Perm, FactorGraphPartitionFunctionIsPermanent) {
  Rng rng(3);
  for (int n = 2; n <= 5; ++n) {
    Matrix A = random_sparse_matrix(n, rng);
    auto g = build_perm_nfg(A);
    EXPECT_EQ(g.num_nodes, 2 * n);
    EXPECT_EQ(g.num_edges(), n * n);
    EXPECT_NEAR(partition_function_exact(g), naive_perm(A), 1e-10 * naive_perm(A));
    if (n <= 3) {
      EXPECT_NEAR(brute_force_z(g), naive_perm(A), 1e-10 * naive_perm(A));
    }
  }
}

TEST(Perm, ZeroRowViolatesStandingAssumption) {
  Matrix A = Matrix::Ones(3, 3);
  A.row(1).setZero();
  try {
    build_perm_nfg(A);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::validation);
    EXPECT_NE(std::string(e.what()).find("standing assumption"), std::string::npos);
  }
  Matrix N = Matrix::Ones(2, 2);
  N(0, 0) = -1;
  EXPECT_THROW(perm_bethe(N), Error);
}

TEST(Perm, BetheOnDiagonalIsExact) {
  auto r = perm_bethe(diag({2.0, 3.0, 0.5}));
  EXPECT_NEAR(r.value, 3.0, 1e-9);
}

TEST(Perm, BetheBlockOnesAttainsUpperBound) {
  Matrix A = kron(Matrix::Identity(2, 2), Matrix::Ones(2, 2));
  auto r = perm_bethe(A);
  EXPECT_NEAR(perm_exact(A) / r.value, 4.0, 4e-5);
}

TEST(Perm, BetheBoundsOnRandomMatrices) {
  Rng rng(4);
  for (int k = 0; k < 100; ++k) {
    int n = 1 + static_cast<int>(rng.below(5));
    Matrix A = random_matrix(n, rng, 0.05, 1.0);
    auto r = perm_bethe(A);
    double ratio = perm_exact(A) / r.value;
    EXPECT_GE(ratio, 1.0 - 1e-7);
    EXPECT_LE(ratio, std::pow(2.0, n / 2.0) * (1 + 1e-7));
    EXPECT_NEAR(r.value, r.pseudo_dual, 1e-7 * r.value);
  }
}

TEST(Perm, ScaledSinkhornKnownRatios) {
  for (int n = 1; n <= 6; ++n) {
    Matrix J = Matrix::Ones(n, n);
    auto r = perm_sinkhorn_scaled(J);
    EXPECT_NEAR(perm_exact(J) / r.value, std::exp(n) * fact(n) / std::pow(n, n), 1e-9 * std::exp(n));
    Matrix D = Matrix::Identity(n, n) * 1.7;
    auto d = perm_sinkhorn_scaled(D);
    EXPECT_NEAR(perm_exact(D) / d.value, std::exp(n), 1e-9 * std::exp(n));
  }
}

TEST(Perm, ScaledSinkhornBoundsOnRandomMatrices) {
  Rng rng(5);
  for (int k = 0; k < 100; ++k) {
    int n = 1 + static_cast<int>(rng.below(5));
    Matrix A = random_matrix(n, rng, 0.05, 1.0);
    double ratio = perm_exact(A) / perm_sinkhorn_scaled(A).value;
    EXPECT_GE(ratio, std::exp(n) * fact(n) / std::pow(n, n) * (1 - 1e-9));
    EXPECT_LE(ratio, std::exp(n) * (1 + 1e-9));
  }
}

TEST(Perm, SinkhornStallIsReported) {
  // No total support: the (0,1) entry can never carry mass, so scaling drifts slowly.
  Matrix A(2, 2);
  A << 1, 1, 0, 1;
  EXPECT_THROW(perm_sinkhorn_scaled(A, 1e-14, 50), Error);
}

TEST(Perm, DegreeOneIsPermanent) {
  Rng rng(6);
  Matrix A = random_matrix(3, rng, 0.1, 1.0);
  for (auto mode : {LiftMode::coefficients, LiftMode::lifting, LiftMode::gauge}) {
    DegreeMPermOptions o;
    o.mode = mode;
    EXPECT_NEAR(perm_bethe_degree_m(A, 1, o).value, perm_exact(A), 1e-12 * perm_exact(A));
  }
  EXPECT_NEAR(perm_sinkhorn_degree_m(A, 1).value, perm_exact(A), 1e-12 * perm_exact(A));
}

TEST(Perm, LiftingAndCoefficientModesAgree) {
  Matrix A(2, 2);
  A << 1, 2, 3, 4;
  DegreeMPermOptions lift_o;
  lift_o.mode = LiftMode::lifting;
  double a = perm_bethe_degree_m(A, 2, lift_o).value;
  double c = perm_bethe_degree_m(A, 2).value;
  EXPECT_NEAR(a, c, 1e-12 * c);
  EXPECT_NEAR(a, std::sqrt(lifting_average_oracle(A, 2)), 1e-12 * a);
}

TEST(Perm, ModesAgreeOnAllEnumerableInstances) {
  Rng rng(7);
  for (auto [n, M] : std::vector<std::pair<int, int>>{{2, 2}, {2, 3}, {3, 2}, {3, 3}}) {
    Matrix A = random_sparse_matrix(n, rng);
    double c = perm_bethe_degree_m(A, M).value;
    DegreeMPermOptions g;
    g.mode = LiftMode::gauge;
    EXPECT_NEAR(perm_bethe_degree_m(A, M, g).value, c, 1e-12 * c) << n << "," << M;
    if (std::pow(fact(M), n * n) <= 1e6) {
      DegreeMPermOptions l;
      l.mode = LiftMode::lifting;
      EXPECT_NEAR(perm_bethe_degree_m(A, M, l).value, c, 1e-12 * c) << n << "," << M;
    }
    auto s = perm_sinkhorn_degree_m(A, M);
    EXPECT_NEAR(s.value, s.cross_check, 1e-12 * s.value) << n << "," << M;
  }
}

TEST(Perm, LiftingMonteCarloWithinError) {
  Rng rng(8);
  Matrix A = random_matrix(3, rng, 0.2, 1.0);
  DegreeMPermOptions o;
  o.mode = LiftMode::mc;
  o.samples = 4000;
  o.seed = 99;
  auto r = perm_bethe_degree_m(A, 2, o);
  double exact_power = std::pow(perm_bethe_degree_m(A, 2).value, 2);
  EXPECT_GT(r.stderr_mean, 0.0);
  EXPECT_LE(std::fabs(r.value * r.value - exact_power), 4.0 * r.stderr_mean);
  o.threads = 3;
  EXPECT_EQ(perm_bethe_degree_m(A, 2, o).value, r.value);
}

TEST(Perm, LiftingBudgetSuggestsCoefficientMode) {
  Matrix A = Matrix::Ones(3, 3);
  DegreeMPermOptions o;
  o.mode = LiftMode::lifting;
  try {
    perm_bethe_degree_m(A, 3, o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::resource);
    EXPECT_NE(std::string(e.what()).find("coefficient"), std::string::npos);
  }
}

TEST(Perm, DiagonalDegreeMRatios) {
  const int n = 3;
  Matrix D = diag({1.5, 0.7, 2.0});
  for (int M = 1; M <= 4; ++M) {
    double p = perm_exact(D);
    EXPECT_NEAR(p / perm_bethe_degree_m(D, M).value, 1.0, 1e-12);
    double expect = std::pow(M, n) / std::pow(fact(M), static_cast<double>(n) / M);
    EXPECT_NEAR(p / perm_sinkhorn_degree_m(D, M).value, expect, 1e-10 * expect);
  }
}

TEST(Perm, DegreeMBoundsOnSeededMatrices) {
  for (int n : {2, 3})
    for (int M : {1, 2, 3}) {
      Rng rng(1000 + 10 * n + M);
      for (int k = 0; k < 500; ++k) {
        Matrix A = rng.uniform() < 0.3 ? random_sparse_matrix(n, rng) : random_matrix(n, rng, 0.01, 1.0);
        double p = perm_exact(A);
        auto b = degree_m_bounds(n, M, p, perm_bethe_degree_m(A, M).value, perm_sinkhorn_degree_m(A, M).value);
        ASSERT_TRUE(b.bethe_ok) << n << "," << M << " ratio " << b.ratio_b;
        ASSERT_TRUE(b.scs_ok) << n << "," << M << " ratio " << b.ratio_scs;
      }
    }
}

TEST(Perm, DegreeMSubmultiplicativeWithUnitFirstDegree) {
  for (int n : {2, 3}) {
    Rng rng(2000 + n);
    for (int k = 0; k < 500; ++k) {
      Matrix A = random_matrix(n, rng, 0.01, 1.0);
      double p = perm_exact(A);
      for (int M2 : {1, 2}) {
        double lhs = std::pow(perm_bethe_degree_m(A, M2 + 1).value, M2 + 1);
        double rhs = p * std::pow(perm_bethe_degree_m(A, M2).value, M2);
        ASSERT_LE(lhs, rhs * (1 + 1e-10)) << n << "," << M2;
      }
    }
  }
}

TEST(Perm, CycleCount) {
  EXPECT_EQ(nontrivial_cycles({0, 1, 3, 2, 5, 6, 4}), 2);
  EXPECT_EQ(nontrivial_cycles({0, 1, 2}), 0);
  EXPECT_EQ(nontrivial_cycles({1, 2, 0}), 1);
  std::vector<int> s{2, 0, 1, 4, 3};
  EXPECT_EQ(nontrivial_cycles(compose(s, inverse(s))), 0);
}

TEST(Perm, DegreeTwoRatioMatchesLifting) {
  Rng rng(9);
  for (int n = 1; n <= 4; ++n)
    for (int k = 0; k < 5; ++k) {
      Matrix A = random_sparse_matrix(n, rng);
      double oracle = n <= 3 ? perm_exact(A) / std::sqrt(lifting_average_oracle(A, 2))
                             : perm_exact(A) / perm_bethe_degree_m(A, 2).value;
      EXPECT_NEAR(perm_ratio_degree2(A), oracle, 1e-10 * oracle) << n;
    }
  EXPECT_THROW(perm_ratio_degree2(Matrix::Ones(8, 8)), Error);
}
