#include <gtest/gtest.h>

#include "oracles.hpp"
#include "w1/exact.hpp"
#include "w1/flowtree.hpp"

using namespace w1;
namespace wt = w1::testing;

TEST(TreeFlow, IdenticalDistributionsGiveIdentityFlow) {
  CounterRng rng(1);
  auto g = wt::random_ground(100, 3, rng);
  auto t = build_quadtree(g, 2);
  auto mu = wt::random_distribution(g.size(), 12, rng);
  auto f = tree_flow(t, mu, mu);
  ASSERT_EQ(f.size(), mu.support_size());
  for (const auto& tr : f.triples) {
    EXPECT_EQ(tr.src, tr.dst);
    EXPECT_DOUBLE_EQ(tr.mass, mu.mass_of(tr.src));
  }
  EXPECT_EQ(flowtree_estimate(t, g, mu, mu), 0.0);
}

TEST(TreeFlow, DiracPairIsSingleTriple) {
  auto g = GroundSet::from_points({0.0, 0.0, 3.0, 4.0}, 2);
  auto t = build_quadtree(g, 3);
  auto f = tree_flow(t, Distribution::dirac(0), Distribution::dirac(1));
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f.triples[0], (FlowTriple{0, 1, 1.0}));
  EXPECT_DOUBLE_EQ(flowtree_estimate(t, g, Distribution::dirac(0), Distribution::dirac(1)), 5.0);
  EXPECT_DOUBLE_EQ(flowtree_estimate(t, g, Distribution::dirac(0), Distribution::dirac(1), Metric::l1), 7.0);
}

TEST(TreeFlow, SharedSupportPointMatchedInPlace) {
  // A point carrying mass on both sides keeps the common part at its leaf.
  auto g = GroundSet::from_points({0.0, 0.5, 1.0}, 1);
  auto t = build_quadtree(g, 8);
  auto mu = Distribution::normalized({{0, 0.5}, {1, 0.5}});
  auto nu = Distribution::normalized({{1, 0.5}, {2, 0.5}});
  auto f = tree_flow(t, mu, nu);
  double self = 0.0;
  for (const auto& tr : f.triples) {
    if (tr.src == 1 && tr.dst == 1) self += tr.mass;
  }
  EXPECT_DOUBLE_EQ(self, 0.5);
  EXPECT_LT(marginal_error(f, mu, nu), 1e-12);
}

TEST(TreeFlow, MismatchedIndexRejected) {
  auto g = GroundSet::from_points({0.0, 1.0}, 1);
  auto t = build_quadtree(g, 1);
  EXPECT_THROW(tree_flow(t, Distribution::dirac(0), Distribution::dirac(4)), InvalidArgument);
  auto bigger = GroundSet::from_points({0.0, 1.0, 2.0}, 1);
  EXPECT_THROW(flowtree_estimate(t, bigger, Distribution::dirac(0), Distribution::dirac(1)), InvalidArgument);
}

TEST(TreeFlow, MarginalsAndSupportBound) {
  CounterRng rng(2);
  auto g = wt::random_ground(800, 6, rng);
  auto t = build_quadtree(g, 4);
  for (int k = 0; k < 300; ++k) {
    auto mu = wt::random_distribution(g.size(), 1 + rng.below(40), rng, k % 2 == 0);
    auto nu = wt::random_distribution(g.size(), 1 + rng.below(40), rng);
    auto f = tree_flow(t, mu, nu);
    EXPECT_LE(marginal_error(f, mu, nu), 1e-9);
    EXPECT_LE(f.size(), mu.support_size() + nu.support_size() - 1);
    for (const auto& tr : f.triples) EXPECT_GT(tr.mass, 0.0);
  }
}

TEST(TreeFlow, TreeOptimalAgainstExactSolver) {
  CounterRng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    auto g = wt::random_ground(60, 1 + rng.below(10), rng);
    auto t = build_quadtree(g, rng());
    auto mu = wt::random_distribution(g.size(), 1 + rng.below(8), rng);
    auto nu = wt::random_distribution(g.size(), 1 + rng.below(8), rng);
    const double tree = tree_cost(t, tree_flow(t, mu, nu));
    const auto oracle = solve_transport(
        make_transport_problem(mu, nu, [&](PointId a, PointId b) { return t.tree_distance(a, b); }));
    EXPECT_NEAR(tree, oracle.value, 1e-9 * std::max(1.0, oracle.value));
  }
}

TEST(Flowtree, UpperBoundsExactW1) {
  CounterRng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    auto g = wt::random_ground(100, 1 + rng.below(10), rng);
    auto t = build_quadtree(g, rng());
    auto mu = wt::random_distribution(g.size(), 8, rng);
    auto nu = wt::random_distribution(g.size(), 8, rng);
    EXPECT_GE(flowtree_estimate(t, g, mu, nu), exact_w1(g, mu, nu).value - 1e-9);
  }
}

TEST(Flowtree, Symmetric) {
  CounterRng rng(6);
  auto g = wt::random_ground(500, 10, rng);
  auto t = build_quadtree(g, 7);
  for (int k = 0; k < 300; ++k) {
    auto mu = wt::random_distribution(g.size(), 1 + rng.below(20), rng, k % 3 == 0);
    auto nu = wt::random_distribution(g.size(), 1 + rng.below(20), rng, k % 2 == 0);
    const double ab = flowtree_estimate(t, g, mu, nu);
    EXPECT_NEAR(ab, flowtree_estimate(t, g, nu, mu), 1e-9 * std::max(1.0, ab));
  }
}

TEST(Flowtree, DeterministicFlow) {
  CounterRng rng(9);
  auto g = wt::random_ground(200, 4, rng);
  auto t = build_quadtree(g, 1);
  auto mu = wt::random_distribution(g.size(), 15, rng);
  auto nu = wt::random_distribution(g.size(), 15, rng);
  auto f1 = tree_flow(t, mu, nu);
  auto f2 = tree_flow(t, mu, nu);
  EXPECT_EQ(f1.triples, f2.triples);
}
