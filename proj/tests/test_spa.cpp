#include "test_util.hpp"

using namespace bethe;
using namespace testutil;

namespace {

// Dominant eigenvalue by power iteration.
double power_method(const Matrix& T) {
  Eigen::VectorXd v = Eigen::VectorXd::Ones(T.rows());
  double lam = 0.0;
  for (int it = 0; it < 5000; ++it) {
    Eigen::VectorXd w = T * v;
    lam = w.norm() / v.norm();
    v = w / w.norm();
  }
  return lam;
}

// Exact node marginals by enumeration.
std::vector<std::vector<double>> exact_node_marginals(const Graph<double>& g) {
  std::vector<std::vector<double>> m(g.num_nodes);
  for (int f = 0; f < g.num_nodes; ++f) m[f].assign(g.factors[f].full_size, 0.0);
  double z = 0.0;
  for (const auto& c : enumerate_configurations(g)) {
    double p = 1.0;
    std::vector<std::size_t> idx(g.num_nodes);
    for (int f = 0; f < g.num_nodes; ++f) {
      const auto& fac = g.factors[f];
      std::size_t i = 0;
      for (std::size_t k = 0; k < fac.edges.size(); ++k) i = i * fac.radix[k] + c[fac.edges[k]];
      idx[f] = i;
      p *= fac.at(i);
    }
    z += p;
    for (int f = 0; f < g.num_nodes; ++f) m[f][idx[f]] += p;
  }
  for (auto& v : m)
    for (auto& x : v) x /= z;
  return m;
}

}  // namespace

TEST(Spa, PathConvergesWithinDiameterPlusOne) {
  Rng rng(1);
  auto g = random_classical(3, {{0, 1}, {1, 2}}, 3, rng);
  auto [mu, rep] = spa_run(g);
  ASSERT_TRUE(rep.converged);
  EXPECT_LE(rep.iterations, 3);
  EXPECT_EQ(rep.damping, 0.0);
  EXPECT_LT(rel(*rep.Zbspa, brute_force_z(g)), 1e-9);
}

TEST(Spa, PowerMethodGraphFixedPointIsDegenerate) {
  auto g = power_method_graph();
  MessageVector<double> fp;
  fp.msg.resize(2);
  fp.msg[0] = {std::vector<double>{0, 1}, std::vector<double>{1, 0}};
  fp.msg[1] = {std::vector<double>{1, 0}, std::vector<double>{0, 1}};
  MessageVector<double> next;
  ASSERT_TRUE(spa_step(g, fp, next));
  EXPECT_LT(message_distance(fp, next), 1e-15);
  auto [mu, rep] = spa_run(g, &fp);
  EXPECT_TRUE(rep.converged);
  EXPECT_EQ(rep.Ze[0], 0.0);
  EXPECT_EQ(rep.Ze[1], 0.0);
  EXPECT_FALSE(rep.Zbspa.has_value());
  try {
    pseudo_dual_bethe(g, mu);
    FAIL() << "expected a degenerate fixed point error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::degenerate);
  }
}

TEST(Spa, PowerMethodGraphDriftsTowardDegeneracy) {
  auto g = power_method_graph();
  SpaOptions o;
  o.damping = 0.0;
  o.max_iters = 10;
  auto early = spa_run(g, o).second;
  o.max_iters = 2000;
  auto late = spa_run(g, o).second;
  EXPECT_LT(late.Ze[0], early.Ze[0]);
  EXPECT_LT(late.Ze[0], 1e-2);
}

TEST(Spa, UniformFactorsKeepUniformMessages) {
  auto g = make_graph<double>(Kind::classical, 3, {{0, 0, 1, 3}, {1, 1, 2, 3}, {2, 0, 2, 3}});
  auto u = uniform_messages(g);
  MessageVector<double> next;
  ASSERT_TRUE(spa_step(g, u, next));
  EXPECT_LT(message_distance(u, next), 1e-15);
  auto b = beliefs(g, u);
  for (const auto& t : b.node)
    for (double v : t) EXPECT_NEAR(v, 1.0 / 9.0, 1e-15);
  for (const auto& t : b.edge)
    for (double v : t) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Spa, TreesAreExactFromAnyStart) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 2 + static_cast<int>(rng.below(5));
    auto ends = random_tree_edges(n, rng);
    auto g = random_classical(n, ends, 2 + static_cast<int>(rng.below(2)), rng);
    Rng init_rng(trial, 9);
    auto init = random_messages(g, init_rng);
    auto [mu, rep] = spa_run(g, &init);
    ASSERT_TRUE(rep.converged);
    EXPECT_LT(rel(*rep.Zbspa, brute_force_z(g)), 1e-9);
    auto d = random_de(n, ends, 2, 40 + trial);
    auto [dmu, drep] = spa_run(d);
    ASSERT_TRUE(drep.converged);
    EXPECT_LT(rel(*drep.Zbspa, brute_force_z(d)), 1e-9);
  }
}

TEST(Spa, ScalingOneMessageLeavesValueUnchanged) {
  Rng rng(3);
  auto g = random_classical(4, {{0, 1}, {1, 2}, {2, 3}, {0, 3}, {0, 2}}, 2, rng);
  auto [mu, rep] = spa_run(g);
  ASSERT_TRUE(rep.converged);
  double z0 = pseudo_dual_bethe(g, mu);
  for (int e = 0; e < g.num_edges(); ++e)
    for (int s = 0; s < 2; ++s) {
      auto m = mu;
      for (auto& x : m.msg[e][s]) x *= 7.0;
      EXPECT_LT(rel(pseudo_dual_bethe(g, m), z0), 1e-12);
    }
  auto d = random_de(3, {{0, 1}, {1, 2}, {0, 2}}, 2, 5);
  auto [dmu, drep] = spa_run(d);
  ASSERT_TRUE(drep.converged);
  cplx dz = pseudo_dual_bethe(d, dmu);
  auto m = dmu;
  for (auto& x : m.msg[1][0]) x *= cplx(7.0, 0.0);
  EXPECT_LT(rel(pseudo_dual_bethe(d, m), dz), 1e-12);
}

TEST(Spa, SingleCycleMatchesDominantEigenvalue) {
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    auto g = random_classical(2, {{0, 1}, {0, 1}}, 3, rng);
    Matrix A(3, 3), B(3, 3);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        A(a, b) = g.factors[0].at(a * 3 + b);
        B(a, b) = g.factors[1].at(a * 3 + b);
      }
    // going around the cycle: edge 0 -> node 0 -> edge 1 -> node 1 -> edge 0
    double lam = power_method(A * B.transpose());
    auto [mu, rep] = spa_run(g);
    ASSERT_TRUE(rep.converged);
    EXPECT_LT(rel(*rep.Zbspa, lam), 1e-8);
  }
}

TEST(Spa, BetheFreeEnergyAtFixedPoint) {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    auto ends = random_connected_edges(5, 2, rng);
    auto g = random_classical(5, ends, 2, rng);
    auto [mu, rep] = spa_run(g);
    ASSERT_TRUE(rep.converged);
    auto b = beliefs(g, mu);
    EXPECT_LT(edge_consistency(g, b), 1e-9);
    EXPECT_LT(rel(std::exp(-bethe_free_energy(g, b)), *rep.Zbspa), 1e-8);
  }
}

TEST(Spa, TreeBeliefsAreExactMarginals) {
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    auto g = random_classical(5, random_tree_edges(5, rng), 2, rng);
    auto [mu, rep] = spa_run(g);
    ASSERT_TRUE(rep.converged);
    auto b = beliefs(g, mu);
    auto ex = exact_node_marginals(g);
    for (int f = 0; f < g.num_nodes; ++f)
      for (std::size_t i = 0; i < ex[f].size(); ++i) EXPECT_NEAR(b.node[f][i], ex[f][i], 1e-9);
  }
}

TEST(Spa, PermanentGraphBeliefsAreDoublyStochastic) {
  Rng rng(19);
  Matrix theta = random_matrix(4, rng, 0.1, 1.0);
  auto g = build_perm_nfg(theta);
  auto [mu, rep] = spa_run(g);
  ASSERT_TRUE(rep.converged);
  auto b = beliefs(g, mu);
  Matrix gam(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) gam(i, j) = b.edge[i * 4 + j][1];
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(gam.row(i).sum(), 1.0, 1e-8);
    EXPECT_NEAR(gam.col(i).sum(), 1.0, 1e-8);
  }
}

TEST(Spa, InvariantsHoldEveryIteration) {
  Rng rng(23);
  auto g = random_classical(4, {{0, 1}, {1, 2}, {2, 3}, {0, 3}}, 3, rng);
  SpaOptions o;
  o.check_invariants = true;
  EXPECT_NO_THROW(spa_run(g, o));
  auto d = random_de(4, {{0, 1}, {1, 2}, {2, 3}, {0, 3}}, 2, 3);
  EXPECT_NO_THROW(spa_run(d, o));
}

TEST(Spa, StrictSenseBetheValueIsRealNonNegative) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    auto d = random_de(4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {2, 3}}, 2, s);
    auto [mu, rep] = spa_run(d);
    ASSERT_TRUE(rep.converged);
    for (const auto& z : rep.Ze) EXPECT_LT(std::fabs(z.imag()), 1e-10 * (1 + std::abs(z)));
    for (const auto& z : rep.Zf) EXPECT_LT(std::fabs(z.imag()), 1e-10 * (1 + std::abs(z)));
    EXPECT_GE(real_bethe_value(*rep.Zbspa), 0.0);
  }
}

TEST(BestFixedPoint, TreeRestartsAgree) {
  Rng rng(29);
  auto g = random_classical(5, random_tree_edges(5, rng), 2, rng);
  auto [mu, rep] = best_fixed_point(g, 8, 4);
  ASSERT_EQ(rep.candidates.size(), 9u);
  for (const auto& c : rep.candidates) {
    ASSERT_TRUE(c.converged);
    EXPECT_LT(rel(*c.value, *rep.Zbspa), 1e-8);
  }
}

TEST(BestFixedPoint, DeterministicUnderSeed) {
  Rng rng(31);
  auto g = random_classical(4, {{0, 1}, {1, 2}, {2, 3}, {0, 3}, {1, 3}}, 2, rng);
  auto a = best_fixed_point(g, 2, 99, SpaOptions{}, 1);
  auto b = best_fixed_point(g, 2, 99, SpaOptions{}, 3);
  EXPECT_EQ(*a.second.Zbspa, *b.second.Zbspa);
  EXPECT_EQ(a.first.msg, b.first.msg);
  EXPECT_EQ(a.second.chosen, b.second.chosen);
}

TEST(BestFixedPoint, FrustratedTriangleListsCandidates) {
  auto g = make_graph<double>(Kind::classical, 3, {{0, 0, 1, 2}, {1, 1, 2, 2}, {2, 0, 2, 2}});
  for (auto& f : g.factors) f.set_dense({0.1, 1.0, 1.0, 0.1});
  auto [mu, rep] = best_fixed_point(g, 16, 0);
  EXPECT_GE(rep.candidates.size(), 1u);
  EXPECT_GE(rep.chosen, 0);
  double best = -1;
  for (const auto& c : rep.candidates)
    if (c.converged && c.value) best = std::max(best, *c.value);
  EXPECT_EQ(best, *rep.Zbspa);
}

TEST(BestFixedPoint, RejectsZeroRestarts) { EXPECT_THROW(best_fixed_point(power_method_graph(), 0), Error); }
