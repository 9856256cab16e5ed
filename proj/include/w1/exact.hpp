#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "w1/error.hpp"
#include "w1/flow.hpp"
#include "w1/ground.hpp"

namespace w1 {

/// Balanced transportation instance: `costs` is row-major, one row per source.
struct TransportProblem {
  std::vector<MassEntry> sources;
  std::vector<MassEntry> sinks;
  std::vector<double> costs;

  double cost(std::size_t i, std::size_t j) const noexcept { return costs[i * sinks.size() + j]; }
};

struct ExactOptions {
  // Upper bound on |supp mu| * |supp nu|.
  std::size_t max_cells = std::size_t{4096} * 4096;
  // Masses are rounded to integer multiples of 1 / mass_scale.
  std::int64_t mass_scale = std::int64_t{1} << 50;
};

struct ExactResult {
  double value = 0.0;
  Flow flow;
};

namespace detail {

// Rounds masses to integers summing to `scale`, giving leftover units to the
// largest fractional parts (ties to the lower index).
inline std::vector<std::int64_t> round_masses(std::span<const MassEntry> entries, std::int64_t scale) {
  double total = 0.0;
  for (const auto& e : entries) total += e.mass;
  std::vector<std::int64_t> units(entries.size());
  std::vector<double> frac(entries.size());
  std::int64_t assigned = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const double exact = entries[i].mass / total * static_cast<double>(scale);
    const double floored = std::floor(exact);
    units[i] = static_cast<std::int64_t>(floored);
    frac[i] = exact - floored;
    assigned += units[i];
  }
  std::vector<std::size_t> order(entries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  std::int64_t left = scale - assigned;
  for (std::size_t k = 0; left != 0; k = (k + 1) % order.size()) {
    if (left > 0) {
      ++units[order[k]];
      --left;
    } else if (units[order[order.size() - 1 - k]] > 0) {
      --units[order[order.size() - 1 - k]];
      ++left;
    }
  }
  return units;
}

}  // namespace detail

/// Exact transport by successive shortest paths on the bipartite residual
/// network, with Dijkstra over reduced costs. Masses are scaled to integers so
/// the augmentation count is bounded combinatorially rather than by precision.
inline ExactResult solve_transport(const TransportProblem& problem, const ExactOptions& options = {}) {
  const std::size_t m = problem.sources.size();
  const std::size_t n = problem.sinks.size();
  if (m == 0 || n == 0) throw InvalidArgument("transport problem needs nonempty supports");
  if (problem.costs.size() != m * n) throw InvalidArgument("cost matrix has the wrong shape");
  for (double c : problem.costs) {
    if (!(c >= 0.0) || !std::isfinite(c)) throw InvalidArgument("transport costs must be finite and nonnegative");
  }

  const std::int64_t scale = options.mass_scale;
  std::vector<std::int64_t> supply = detail::round_masses(problem.sources, scale);
  std::vector<std::int64_t> demand = detail::round_masses(problem.sinks, scale);
  std::vector<std::int64_t> flow(m * n, 0);

  // Node layout: sources [0, m), sinks [m, m + n), super sink m + n. The super
  // source is implicit: every source with supply left starts at distance 0.
  const std::size_t sink = m + n;
  const std::size_t nodes = m + n + 1;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> potential(nodes, 0.0);
  std::vector<double> dist(nodes);
  std::vector<std::size_t> pred(nodes);
  std::vector<char> done(nodes);

  std::int64_t remaining = scale;
  std::size_t rounds = 0;
  const std::size_t round_limit = 16 * (m + n) * (m + n) + 64;
  while (remaining > 0) {
    if (++rounds > round_limit) throw ComputeError("exact solver failed to converge");
    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(done.begin(), done.end(), 0);
    // The implicit source has potential 0, so its edge to i has reduced cost -potential[i].
    for (std::size_t i = 0; i < m; ++i) {
      if (supply[i] > 0) {
        dist[i] = std::max(0.0, -potential[i]);
        pred[i] = nodes;
      }
    }
    auto relax = [&](std::size_t from, std::size_t to, double cost) {
      const double reduced = std::max(0.0, cost + potential[from] - potential[to]);
      if (dist[from] + reduced < dist[to]) {
        dist[to] = dist[from] + reduced;
        pred[to] = from;
      }
    };
    while (true) {
      std::size_t u = nodes;
      double best = kInf;
      for (std::size_t v = 0; v < nodes; ++v) {
        if (!done[v] && dist[v] < best) {
          best = dist[v];
          u = v;
        }
      }
      if (u == nodes || u == sink) break;
      done[u] = 1;
      if (u < m) {
        for (std::size_t j = 0; j < n; ++j) {
          if (!done[m + j]) relax(u, m + j, problem.cost(u, j));
        }
      } else {
        const std::size_t j = u - m;
        if (demand[j] > 0) relax(u, sink, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
          if (flow[i * n + j] > 0 && !done[i]) relax(u, i, -problem.cost(i, j));
        }
      }
    }
    if (dist[sink] == kInf) throw ComputeError("exact solver: infeasible after mass rounding");

    for (std::size_t v = 0; v < nodes; ++v) potential[v] += std::min(dist[v], dist[sink]);

    // Walk back from the sink to find the bottleneck.
    std::size_t j_end = pred[sink] - m;
    std::int64_t push = demand[j_end];
    std::size_t v = pred[sink];
    while (true) {
      const std::size_t i = pred[v];
      if (pred[i] == nodes) {
        push = std::min(push, supply[i]);
        break;
      }
      const std::size_t j_back = pred[i] - m;
      push = std::min(push, flow[i * n + j_back]);
      v = pred[i];
    }
    demand[j_end] -= push;
    v = pred[sink];
    while (true) {
      const std::size_t j = v - m;
      const std::size_t i = pred[v];
      flow[i * n + j] += push;
      if (pred[i] == nodes) {
        supply[i] -= push;
        break;
      }
      const std::size_t j_back = pred[i] - m;
      flow[i * n + j_back] -= push;
      v = pred[i];
    }
    remaining -= push;
  }

  ExactResult result;
  const double inv = 1.0 / static_cast<double>(scale);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (flow[i * n + j] > 0) {
        const double mass = static_cast<double>(flow[i * n + j]) * inv;
        result.flow.triples.push_back({problem.sources[i].point, problem.sinks[j].point, mass});
        result.value += mass * problem.cost(i, j);
      }
    }
  }
  return result;
}

template <typename PairCost>
TransportProblem make_transport_problem(const Distribution& mu, const Distribution& nu, PairCost&& pair_cost) {
  TransportProblem p;
  p.sources.assign(mu.entries().begin(), mu.entries().end());
  p.sinks.assign(nu.entries().begin(), nu.entries().end());
  p.costs.resize(p.sources.size() * p.sinks.size());
  for (std::size_t i = 0; i < p.sources.size(); ++i) {
    for (std::size_t j = 0; j < p.sinks.size(); ++j) {
      p.costs[i * p.sinks.size() + j] = pair_cost(p.sources[i].point, p.sinks[j].point);
    }
  }
  return p;
}

/// Exact W1 between two distributions over the ground metric.
inline ExactResult exact_w1(const GroundSet& ground, const Distribution& mu, const Distribution& nu,
                            Metric metric = Metric::euclidean, const ExactOptions& options = {}) {
  if (mu.empty() || nu.empty()) throw InvalidArgument("exact W1 needs nonempty supports");
  check_bound(mu, ground);
  check_bound(nu, ground);
  if (mu.support_size() * nu.support_size() > options.max_cells) {
    throw InvalidArgument("support product " + std::to_string(mu.support_size() * nu.support_size()) +
                          " exceeds the exact solver limit of " + std::to_string(options.max_cells) +
                          "; use an estimator instead");
  }
  return solve_transport(
      make_transport_problem(mu, nu, [&](PointId a, PointId b) { return ground.distance(a, b, metric); }),
      options);
}

}  // namespace w1
