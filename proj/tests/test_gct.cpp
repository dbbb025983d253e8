#include "test_util.hpp"

using namespace bethe;
using namespace testutil;

TEST(Gct, TopologyPresets) {
  EXPECT_EQ(topology_preset("fig1").edges.size(), 5u);
  EXPECT_EQ(topology_preset("fig5").edges.size(), 6u);
  EXPECT_EQ(topology_preset("theta").num_nodes, 2);
  EXPECT_EQ(topology_preset("tree3").edges.size(), 2u);
  EXPECT_THROW(topology_preset("nope"), Error);
}

TEST(Gct, RandomGraphsAreStrictSenseWithUnitTrace) {
  for (double coupling : {1.0, 0.01, 0.0})
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      auto g = random_denfg(topology_preset("fig1"), 2, seed, coupling);
      auto rep = validate_graph(g);
      EXPECT_TRUE(rep.accepted) << (rep.errors.empty() ? "" : rep.errors[0]);
      for (int f = 0; f < g.num_nodes; ++f) {
        Eigen::MatrixXcd C = choi_matrix(g, f);
        EXPECT_NEAR(C.trace().real(), 1.0, 1e-12);
        EXPECT_NEAR(C.trace().imag(), 0.0, 1e-12);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(C);
        EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12);
      }
    }
  EXPECT_THROW(random_denfg(topology_preset("fig1"), 2, 1, 1.5), Error);
}

TEST(Gct, SeedsGiveDistinctDeterministicGraphs) {
  auto t = topology_preset("fig1");
  auto a = random_denfg(t, 2, 4), b = random_denfg(t, 2, 4), c = random_denfg(t, 2, 5);
  EXPECT_EQ(a.factors[0].to_dense(), b.factors[0].to_dense());
  EXPECT_NE(a.factors[0].to_dense(), c.factors[0].to_dense());
}

TEST(Gct, SingleEdgeSatisfiesConditionWithEquality) {
  auto g = random_de(2, {{0, 1}}, 2, 9);
  auto r = check_condition(g);
  ASSERT_TRUE(r.checkable) << r.note;
  double Z = partition_function_exact(g).real();
  EXPECT_NEAR(r.z_star, Z, 1e-9 * Z);
  EXPECT_NEAR(r.abs_sum_product, r.z_star, 1e-8 * r.z_star);
  EXPECT_NEAR(r.alpha, 0.0, 1e-8);
  EXPECT_TRUE(r.condition);
}

TEST(Gct, TreeLeavesOnlyKeepTheZeroEntry) {
  auto g = random_denfg(topology_preset("tree3"), 2, 9);
  auto [mu, rep] = best_fixed_point(g, 4, 9);
  double Z = partition_function_exact(g).real();
  EXPECT_NEAR(real_bethe_value(*rep.Zbspa), Z, 1e-9 * Z);
  auto lr = lct_transform(g, mu);
  for (int f : {0, 2}) {
    const auto& fac = lr.graph.factors[f];
    double rest = 0;
    for (std::size_t i = 1; i < fac.full_size; ++i) rest += std::abs(fac.at(i));
    EXPECT_LE(rest, 1e-9 * std::abs(fac.at(0)));
  }
  // the middle node keeps weight-two entries, so the product exceeds Z*
  auto r = check_condition(g);
  EXPECT_GE(r.abs_sum_product, r.z_star * (1 - 1e-12));
}

TEST(Gct, ConditionMatchesItsDefinition) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto g = random_denfg(topology_preset("fig1"), 2, seed, 0.01);
    auto r = check_condition(g);
    if (!r.checkable) continue;
    EXPECT_EQ(r.condition, r.z_star > 0 && 1.5 * r.z_star > r.abs_sum_product);
    EXPECT_NEAR(r.alpha, (r.abs_sum_product - r.z_star) / r.z_star, 1e-12);
    // the product of absolute table sums dominates |Z| of the transformed graph
    EXPECT_GE(r.abs_sum_product, partition_function_exact(g).real() * (1 - 1e-9));
  }
}

TEST(Gct, VanishingBetheValueFailsCondition) {
  // every table is zero, so no fixed point has a positive Bethe value
  auto g = make_graph<double>(Kind::classical, 2, {{0, 0, 1, 2}});
  g.factors[0].set_dense({0, 0});
  g.factors[1].set_dense({1, 1});
  auto r = check_condition(g);
  EXPECT_FALSE(r.condition);
  EXPECT_FALSE(r.z_star > 0.0);
}

TEST(Gct, SeedSevenRecord) {
  auto g = random_denfg(topology_preset("fig1"), 2, 7);
  auto r = check_condition(g);
  ASSERT_TRUE(r.checkable) << r.note;
  EXPECT_TRUE(std::isfinite(r.z_star));
  EXPECT_TRUE(std::isfinite(r.abs_sum_product));
  auto j = gct_record_json(r);
  EXPECT_TRUE(j.contains("Z_star"));
  EXPECT_TRUE(j.contains("abs_sum_product"));
  EXPECT_TRUE(j.contains("condition_satisfied"));
}

TEST(Gct, TreeExperimentIsExactForEveryM) {
  ExperimentOptions o;
  o.topology = "tree3";
  o.n_graphs = 5;
  o.M_max = 3;
  o.mc_from = 99;
  auto r = convergence_experiment(o);
  for (const auto& rec : r.records) {
    ASSERT_EQ(rec.series.size(), 3u) << rec.note;
    for (const auto& p : rec.series) EXPECT_LE(std::fabs(p.rel_error), 1e-6) << p.M;
  }
}

TEST(Gct, SmallExperiment) {
  ExperimentOptions o;
  o.n_graphs = 10;
  o.M_max = 3;
  o.seed = 3;
  auto r = convergence_experiment(o);
  ASSERT_EQ(r.records.size(), 10u);
  ASSERT_EQ(r.summary.size(), 6u);
  for (const auto& rec : r.records) {
    ASSERT_EQ(rec.series.size(), 3u) << rec.note;
    EXPECT_NEAR(rec.series[0].value, rec.z_exact, 1e-8 * rec.z_exact);
    for (const auto& p : rec.series) {
      EXPECT_TRUE(std::isfinite(p.value));
      EXPECT_GE(p.value, -1e-8);
    }
    if (rec.condition) {
      for (int M : {2, 3}) EXPECT_TRUE(lower_bound_chain_holds(rec, M)) << rec.index << " M=" << M;
    }
  }
  // summary rows recomputed from the records
  for (const auto& row : r.summary) {
    std::vector<double> v;
    for (const auto& rec : r.records)
      if (row.subset == "all" || rec.condition) v.push_back(std::fabs(rec.series[row.M - 1].rel_error));
    ASSERT_EQ(row.count, static_cast<int>(v.size()));
    double m = 0;
    for (double x : v) m += x;
    if (!v.empty()) {
      EXPECT_NEAR(row.mean_abs_rel, m / v.size(), 1e-15 + 1e-12 * m);
    }
  }
  o.threads = 3;
  auto r2 = convergence_experiment(o);
  for (std::size_t i = 0; i < r.records.size(); ++i)
    for (std::size_t k = 0; k < r.records[i].series.size(); ++k)
      EXPECT_EQ(r.records[i].series[k].value, r2.records[i].series[k].value);
}

TEST(Gct, CoverValueSurvivesTransform) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto g = random_denfg(topology_preset("fig1"), 2, seed);
    auto [mu, rep] = best_fixed_point(g, 4, seed);
    auto lr = lct_transform(g, mu);
    CoverOptions ga;
    ga.mode = CoverMode::gauge;
    auto a = degree_m_bethe(g, 2, ga).mean_z;
    auto b = degree_m_bethe(lr.graph, 2, ga).mean_z;
    EXPECT_LT(rel(a, b), 1e-5) << seed;
  }
}

TEST(Gct, EmpiricalCdf) {
  ExperimentResult r;
  for (double x : {0.3, -0.1, 0.2}) {
    GctRecord rec;
    rec.series.push_back({1, 1.0, -1.0, "exact", x});
    r.records.push_back(rec);
  }
  GctRecord bad;
  r.records.push_back(bad);
  auto cdf = empirical_cdf(r, 1);
  ASSERT_EQ(cdf.size(), 3u);
  EXPECT_DOUBLE_EQ(cdf[0].first, -0.1);
  EXPECT_DOUBLE_EQ(cdf[2].first, 0.3);
  EXPECT_DOUBLE_EQ(cdf[0].second, 1.0 / 3);
  EXPECT_DOUBLE_EQ(cdf[2].second, 1.0);
}

TEST(Gct, LowerBoundChainArithmetic) {
  GctRecord r;
  r.z_star = 2.0;
  r.alpha = 0.25;
  r.series = {{1, 2.0, -1.0, "exact", 0.0}, {2, 1.7, -1.0, "exact", 0.0}};
  // 1.7^2 = 2.89 >= 4 (1 - 1/3) = 2.667
  EXPECT_TRUE(lower_bound_chain_holds(r, 2));
  r.series[1].value = 1.5;
  EXPECT_FALSE(lower_bound_chain_holds(r, 2));
  r.alpha = 0.6;
  EXPECT_FALSE(lower_bound_chain_holds(r, 1));
}
