#include <gtest/gtest.h>

#include "oracles.hpp"
#include "w1/exact.hpp"
#include "w1/synth.hpp"

using namespace w1;

TEST(Sphere, PointsAreUnitAndCapsRespected) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto inst = generate_instance(200, 10, 10, 0.25, seed);
    EXPECT_EQ(inst.ground.size(), 210u);
    for (PointId p = 0; p < inst.ground.size(); ++p) {
      double norm = 0.0;
      for (double c : inst.sphere_point(p)) norm += c * c;
      EXPECT_NEAR(std::sqrt(norm), 1.0, 1e-9);
    }
    for (std::size_t k = 0; k < 10; ++k) {
      EXPECT_LE(distance(inst.sphere_point(inst.planted[k]), inst.sphere_point(inst.perturbed[k]), Metric::euclidean),
                0.25 + 1e-12);
      // Translation keeps internal distances.
      EXPECT_NEAR(inst.ground.distance(inst.planted[k], inst.perturbed[k]),
                  distance(inst.sphere_point(inst.planted[k]), inst.sphere_point(inst.perturbed[k]), Metric::euclidean),
                  1e-12);
    }
    auto sorted = inst.planted;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(std::unique(sorted.begin(), sorted.end()), sorted.end());
    EXPECT_EQ(inst.query.support_size(), 10u);
  }
}

TEST(Sphere, CapSamplingFillsTheCap) {
  // Uniform on the cap puts most mass near its rim in high dimension.
  CounterRng rng(3);
  std::vector<double> center(10, 0.0);
  center[0] = 1.0;
  double far = 0.0;
  const int draws = 4000;
  for (int i = 0; i < draws; ++i) {
    const auto y = sample_cap(center, 0.4, rng);
    const double d = distance(center, y, Metric::euclidean);
    ASSERT_LE(d, 0.4 + 1e-12);
    if (d > 0.3) far += 1.0;
  }
  // Area fraction of the cap beyond chord 0.3 is 1 - (0.3/0.4)^9 ~ 0.92.
  EXPECT_NEAR(far / draws, 1.0 - std::pow(0.75, 9), 0.03);
}

TEST(Sphere, ZeroEpsilonCopiesPlantedPoints) {
  auto inst = generate_instance(50, 5, 4, 0.0, 9);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(inst.ground.distance(inst.planted[k], inst.perturbed[k]), 0.0);
  }
  EXPECT_EQ(exact_w1(inst.ground, inst.planted_distribution, inst.query).value, 0.0);
}

TEST(Sphere, Deterministic) {
  auto a = generate_instance(100, 6, 5, 0.3, 42);
  auto b = generate_instance(100, 6, 5, 0.3, 42);
  EXPECT_EQ(a.sphere_points, b.sphere_points);
  EXPECT_EQ(a.planted, b.planted);
  auto c = generate_instance(100, 6, 5, 0.3, 43);
  EXPECT_NE(a.sphere_points, c.sphere_points);
}

TEST(Sphere, Preconditions) {
  EXPECT_THROW(generate_instance(5, 10, 6, 0.1, 1), InvalidArgument);
  EXPECT_THROW(generate_instance(5, 10, 0, 0.1, 1), InvalidArgument);
  EXPECT_THROW(generate_instance(5, 1, 2, 0.1, 1), InvalidArgument);
  EXPECT_THROW(generate_instance(5, 10, 2, 2.0, 1), InvalidArgument);
  EXPECT_THROW(generate_instance(5, 10, 2, -0.1, 1), InvalidArgument);
}

TEST(Trial, GroundEqualToPlantedSetSucceeds) {
  // N = s and tiny epsilon: cells isolating each (x_k, y_k) pair exist.
  int both = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto inst = generate_instance(3, 3, 3, 1e-6, seed);
    auto t = build_quadtree(inst.ground, seed);
    auto o = trial_success(inst, t);
    EXPECT_EQ(o.quadtree_ok, o.flowtree_ok);  // no non-planted points exist
    both += o.quadtree_ok && o.flowtree_ok;
  }
  EXPECT_GT(both, 15);
}

TEST(Trial, ExtraGroundPointBreaksOnlyQuadtree) {
  // Hand-built instance in 2D: the pair (x, y) shares its smallest cell with an
  // extra non-planted point z, far from the other planted pair.
  PlantedInstance inst;
  inst.dim = 2;
  // ids: 0 = x1, 1 = z, 2 = x2, 3 = y1, 4 = y2
  inst.sphere_points = {0.10, 0.10, 0.12, 0.11, 0.90, 0.90, 0.11, 0.12, 0.91, 0.90};
  inst.ground = GroundSet::from_points(inst.sphere_points, 2);
  inst.planted = {0, 2};
  inst.perturbed = {3, 4};
  inst.query = Distribution::uniform(inst.perturbed);
  inst.planted_distribution = Distribution::uniform(inst.planted);
  bool seen = false;
  for (std::uint64_t seed = 0; seed < 200 && !seen; ++seed) {
    auto t = build_quadtree(inst.ground, seed);
    const NodeId h1 = t.lca(t.leaf_of(0), t.leaf_of(3));
    const NodeId h2 = t.lca(t.leaf_of(2), t.leaf_of(4));
    if (!t.contains(h1, 1) || t.contains(h1, 2) || t.node(h2).point_count() != 2) continue;
    seen = true;
    auto o = trial_success(inst, t);
    EXPECT_FALSE(o.quadtree_ok);
    EXPECT_TRUE(o.flowtree_ok);
  }
  EXPECT_TRUE(seen);
}

TEST(Trial, FlowtreeImpliedByQuadtree) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    auto inst = generate_instance(100, 10, 10, 0.05, seed);
    auto t = build_quadtree(inst.ground, seed + 1000);
    auto o = trial_success(inst, t);
    if (o.quadtree_ok) {
      EXPECT_TRUE(o.flowtree_ok);
    }
  }
}

TEST(Trial, WrongIndexRejected) {
  auto inst = generate_instance(20, 3, 2, 0.1, 1);
  auto other = generate_instance(21, 3, 2, 0.1, 1);
  EXPECT_THROW(trial_success(inst, build_quadtree(other.ground, 1)), InvalidArgument);
}

TEST(Sweep, RatesBoundedAndNested) {
  SweepConfig cfg;
  cfg.N_values = {100, 300};
  cfg.trials = 30;
  cfg.seed = 5;
  cfg.epsilon = 0.05;
  auto rows = run_model_sweep(cfg);
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) {
    EXPECT_GE(r.quadtree_rate, 0.0);
    EXPECT_LE(r.flowtree_rate, 1.0);
    EXPECT_GE(r.flowtree_rate, r.quadtree_rate);
    EXPECT_EQ(r.trials, 30u);
  }
}

TEST(Sweep, SingleTrialReproducibleAcrossThreads) {
  SweepConfig cfg;
  cfg.N_values = {100};
  cfg.trials = 1;
  cfg.seed = 8;
  auto a = run_model_sweep(cfg);
  auto b = run_model_sweep(cfg);
  EXPECT_EQ(a[0].quadtree_rate, b[0].quadtree_rate);
  EXPECT_EQ(a[0].flowtree_rate, b[0].flowtree_rate);
  cfg.trials = 24;
  cfg.threads = 1;
  auto serial = run_model_sweep(cfg);
  cfg.threads = 4;
  auto parallel = run_model_sweep(cfg);
  EXPECT_EQ(serial[0].quadtree_rate, parallel[0].quadtree_rate);
  EXPECT_EQ(serial[0].flowtree_rate, parallel[0].flowtree_rate);
  cfg.trials = 0;
  EXPECT_THROW(run_model_sweep(cfg), InvalidArgument);
}

TEST(Sweep, TinyEpsilonAlwaysSucceeds) {
  SweepConfig cfg;
  cfg.dim = 10;
  cfg.support = 10;
  cfg.epsilon = 1e-9;
  cfg.N_values = {100};
  cfg.trials = 20;
  cfg.seed = 2;
  auto rows = run_model_sweep(cfg);
  EXPECT_EQ(rows[0].quadtree_rate, 1.0);
  EXPECT_EQ(rows[0].flowtree_rate, 1.0);
}

TEST(Benchmark, ShapeAndDeterminism) {
  BenchmarkConfig cfg;
  cfg.dim = 6;
  cfg.ground_points = 300;
  cfg.topics = 5;
  cfg.dataset_size = 40;
  cfg.query_count = 10;
  cfg.support = 12;
  cfg.neighbor_pool = 8;
  cfg.seed = 3;
  auto a = generate_benchmark(cfg);
  auto b = generate_benchmark(cfg);
  EXPECT_EQ(a.dataset.size(), 40u);
  EXPECT_EQ(a.queries.size(), 10u);
  EXPECT_EQ(a.ground.dim(), 6u);
  EXPECT_DOUBLE_EQ(a.dataset.average_support(), 12.0);
  for (std::size_t i = 0; i < a.dataset.size(); ++i) EXPECT_EQ(a.dataset[i], b.dataset[i]);
  for (std::size_t i = 0; i < a.queries.size(); ++i) EXPECT_EQ(a.queries[i], b.queries[i]);
  cfg.support = 100;
  EXPECT_THROW(generate_benchmark(cfg), InvalidArgument);
}
