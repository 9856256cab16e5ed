#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "w1/error.hpp"
#include "w1/ground.hpp"
#include "w1/parallel.hpp"
#include "w1/quadtree.hpp"
#include "w1/random.hpp"

namespace w1 {

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) noexcept {
  return splitmix64(seed ^ splitmix64(a * 0x9e3779b97f4a7c15ULL + splitmix64(b + 0x2545f4914f6cdd1dULL)));
}

inline void random_unit_vector(std::span<double> out, CounterRng& rng) {
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& v : out) {
      v = rng.normal();
      norm += v * v;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (auto& v : out) v /= norm;
}

/// Uniform point on the unit sphere within chordal distance `epsilon` of the
/// unit vector `center`. The geodesic angle is drawn by rejection against
/// the sin^(d-2) density; the direction is a normalized Gaussian in the
/// tangent plane.
inline std::vector<double> sample_cap(std::span<const double> center, double epsilon, CounterRng& rng) {
  const std::size_t d = center.size();
  std::vector<double> y(center.begin(), center.end());
  if (epsilon <= 0.0) return y;
  const double theta_max = 2.0 * std::asin(std::min(1.0, epsilon / 2.0));
  const double sin_bound = std::sin(std::min(theta_max, std::numbers::pi / 2));
  std::vector<double> u(d);
  while (true) {
    double theta = 0.0;
    while (true) {
      theta = rng.uniform() * theta_max;
      const double ratio = std::sin(theta) / sin_bound;
      if (rng.uniform() < std::pow(ratio, static_cast<double>(d) - 2.0)) break;
    }
    double dot = 0.0;
    double norm = 0.0;
    do {
      for (auto& v : u) v = rng.normal();
      dot = 0.0;
      for (std::size_t a = 0; a < d; ++a) dot += u[a] * center[a];
      norm = 0.0;
      for (std::size_t a = 0; a < d; ++a) {
        u[a] -= dot * center[a];
        norm += u[a] * u[a];
      }
    } while (norm < 1e-24);
    norm = std::sqrt(norm);
    double chord = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
      y[a] = std::cos(theta) * center[a] + std::sin(theta) * u[a] / norm;
      chord += (y[a] - center[a]) * (y[a] - center[a]);
    }
    if (std::sqrt(chord) <= epsilon) return y;
  }
}

/// One draw of the planted sphere model: N uniform points on S^{d-1}, a
/// planted subset x_1..x_s, and a query over perturbed copies y_1..y_s that
/// are appended to the ground set (ids N..N+s-1).
struct PlantedInstance {
  std::size_t dim = 0;
  std::vector<double> sphere_points;  // untranslated, row-major, N + s rows
  GroundSet ground;
  std::vector<PointId> planted;
  std::vector<PointId> perturbed;  // perturbed[k] is the copy of planted[k]
  Distribution query;
  Distribution planted_distribution;
  double epsilon = 0.0;

  std::span<const double> sphere_point(PointId p) const { return {sphere_points.data() + p * dim, dim}; }
};

inline PlantedInstance generate_instance(std::size_t N, std::size_t d, std::size_t s, double epsilon,
                                         std::uint64_t seed) {
  if (s < 1 || N < s) throw InvalidArgument("planted model needs N >= s >= 1");
  if (d < 2) throw InvalidArgument("planted model needs d >= 2");
  if (!(epsilon >= 0.0 && epsilon < 2.0)) throw InvalidArgument("epsilon must lie in [0, 2)");
  CounterRng rng(seed, /*stream=*/0x5eed);
  PlantedInstance inst;
  inst.dim = d;
  inst.epsilon = epsilon;
  inst.sphere_points.resize((N + s) * d);
  for (std::size_t p = 0; p < N; ++p) random_unit_vector({inst.sphere_points.data() + p * d, d}, rng);
  inst.planted = sample_without_replacement(static_cast<std::uint32_t>(N), static_cast<std::uint32_t>(s), rng);
  for (std::size_t k = 0; k < s; ++k) {
    const auto y = sample_cap(inst.sphere_point(inst.planted[k]), epsilon, rng);
    std::copy(y.begin(), y.end(), inst.sphere_points.begin() + static_cast<std::ptrdiff_t>((N + k) * d));
    inst.perturbed.push_back(static_cast<PointId>(N + k));
  }
  inst.ground = GroundSet::from_points(inst.sphere_points, d);
  inst.query = Distribution::uniform(inst.perturbed);
  inst.planted_distribution = Distribution::uniform(inst.planted);
  return inst;
}

struct TrialOutcome {
  bool quadtree_ok = false;
  bool flowtree_ok = false;
};

/// Success criteria on the tree: with H_k the smallest cell holding both x_k
/// and y_k, Quadtree succeeds when no H_k holds any other ground point, and
/// Flowtree succeeds when no H_k holds another planted or perturbed point.
inline TrialOutcome trial_success(const PlantedInstance& inst, const QuadtreeIndex& index) {
  if (index.point_count() != inst.ground.size()) throw InvalidArgument("quadtree does not cover the instance");
  const std::size_t s = inst.planted.size();
  TrialOutcome out{true, true};
  for (std::size_t k = 0; k < s; ++k) {
    index.check_point(inst.planted[k]);
    index.check_point(inst.perturbed[k]);
    const NodeId cell = index.lca(index.leaf_of(inst.planted[k]), index.leaf_of(inst.perturbed[k]));
    if (index.node(cell).point_count() > 2) out.quadtree_ok = false;
    for (std::size_t j = 0; j < s && out.flowtree_ok; ++j) {
      if (j == k) continue;
      if (index.contains(cell, inst.planted[j]) || index.contains(cell, inst.perturbed[j])) out.flowtree_ok = false;
    }
  }
  return out;
}

struct SweepRow {
  std::size_t N = 0;
  std::size_t trials = 0;
  double quadtree_rate = 0.0;
  double flowtree_rate = 0.0;
};

struct SweepConfig {
  std::size_t dim = 10;
  std::size_t support = 10;
  double epsilon = 0.25;
  std::vector<std::size_t> N_values;
  std::size_t trials = 100;
  std::uint64_t seed = 0;
  std::uint32_t max_depth = QuadtreeIndex::kDefaultMaxDepth;
  unsigned threads = 1;
};

// Every trial draws a fresh instance and a fresh tree shift from streams keyed
// by (seed, N, trial), so results do not depend on the thread count.
inline std::vector<SweepRow> run_model_sweep(const SweepConfig& cfg) {
  if (cfg.trials < 1) throw InvalidArgument("sweep needs at least one trial");
  std::vector<SweepRow> rows;
  for (std::size_t N : cfg.N_values) {
    std::vector<TrialOutcome> outcomes(cfg.trials);
    parallel_for(cfg.trials, cfg.threads, [&](std::size_t t) {
      const auto inst = generate_instance(N, cfg.dim, cfg.support, cfg.epsilon, derive_seed(cfg.seed, N, 2 * t));
      const auto index = QuadtreeIndex::build(inst.ground, derive_seed(cfg.seed, N, 2 * t + 1), cfg.max_depth);
      outcomes[t] = trial_success(inst, index);
    });
    SweepRow row{N, cfg.trials, 0.0, 0.0};
    for (const auto& o : outcomes) {
      row.quadtree_rate += o.quadtree_ok ? 1.0 : 0.0;
      row.flowtree_rate += o.flowtree_ok ? 1.0 : 0.0;
    }
    row.quadtree_rate /= static_cast<double>(cfg.trials);
    row.flowtree_rate /= static_cast<double>(cfg.trials);
    rows.push_back(row);
  }
  return rows;
}

struct BenchmarkConfig {
  std::size_t dim = 50;
  std::size_t ground_points = 4000;
  std::size_t topics = 20;
  double topic_spread = 3.0;   // std-dev of topic centers
  std::size_t dataset_size = 500;
  std::size_t query_count = 200;
  std::size_t support = 32;
  double swap_probability = 1.0;  // per query point, chance of moving to a neighbor
  std::size_t neighbor_pool = 64;
  std::uint64_t seed = 0;
};

/// Clustered Gaussian ground set with topic-style documents. Every document
/// is uniform over `support` points drawn from one topic; each query copies a
/// random document and moves some of its points to nearby ground points.
struct Benchmark {
  GroundSet ground;
  Dataset dataset;
  Dataset queries;
};

inline Benchmark generate_benchmark(const BenchmarkConfig& cfg) {
  if (cfg.topics == 0 || cfg.ground_points < cfg.topics) throw InvalidArgument("bad topic configuration");
  if (cfg.support == 0 || cfg.support > cfg.ground_points / cfg.topics) {
    throw InvalidArgument("support exceeds the points available per topic");
  }
  CounterRng rng(cfg.seed, /*stream=*/0xbe7c);
  const std::size_t d = cfg.dim;
  std::vector<double> centers(cfg.topics * d);
  for (auto& c : centers) c = cfg.topic_spread * rng.normal();
  std::vector<double> coords(cfg.ground_points * d);
  std::vector<std::vector<PointId>> topic_points(cfg.topics);
  for (std::size_t p = 0; p < cfg.ground_points; ++p) {
    const std::size_t t = p % cfg.topics;
    topic_points[t].push_back(static_cast<PointId>(p));
    for (std::size_t a = 0; a < d; ++a) coords[p * d + a] = centers[t * d + a] + rng.normal();
  }
  Benchmark b;
  b.ground = GroundSet::from_points(std::move(coords), d);

  std::vector<std::vector<PointId>> supports;
  for (std::size_t i = 0; i < cfg.dataset_size; ++i) {
    const auto& pool = topic_points[rng.below(cfg.topics)];
    auto pick = sample_without_replacement(static_cast<std::uint32_t>(pool.size()),
                                           static_cast<std::uint32_t>(cfg.support), rng);
    std::vector<PointId> support;
    for (auto k : pick) support.push_back(pool[k]);
    b.dataset.push_back("d" + std::to_string(i), Distribution::uniform(support));
    supports.push_back(std::move(support));
  }

  // Nearest ground neighbors of a point (excluding itself), by index order on ties.
  auto neighbors = [&](PointId p) {
    std::vector<std::pair<double, PointId>> all;
    all.reserve(b.ground.size());
    for (PointId q = 0; q < b.ground.size(); ++q) {
      if (q != p) all.emplace_back(b.ground.distance(p, q), q);
    }
    const std::size_t k = std::min(cfg.neighbor_pool, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end());
    std::vector<PointId> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back(all[i].second);
    return out;
  };

  for (std::size_t qi = 0; qi < cfg.query_count; ++qi) {
    std::vector<PointId> support = supports[rng.below(supports.size())];
    for (auto& p : support) {
      if (rng.uniform() >= cfg.swap_probability) continue;
      const auto near = neighbors(p);
      const PointId candidate = near[rng.below(near.size())];
      if (std::find(support.begin(), support.end(), candidate) == support.end()) p = candidate;
    }
    b.queries.push_back("q" + std::to_string(qi), Distribution::uniform(support));
  }
  return b;
}

}  // namespace w1
