#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "w1/ground.hpp"

namespace w1 {

struct FlowTriple {
  PointId src;
  PointId dst;
  double mass;

  friend bool operator==(const FlowTriple&, const FlowTriple&) = default;
};

/// Sparse transport plan between two distributions.
struct Flow {
  std::vector<FlowTriple> triples;

  std::size_t size() const noexcept { return triples.size(); }

  // Cost of the plan priced in the ground metric.
  double cost(const GroundSet& ground, Metric metric = Metric::euclidean) const noexcept {
    double acc = 0.0;
    for (const auto& t : triples) acc += t.mass * ground.distance(t.src, t.dst, metric);
    return acc;
  }

  template <typename PairCost>
  double cost_with(PairCost&& pair_cost) const {
    double acc = 0.0;
    for (const auto& t : triples) acc += t.mass * pair_cost(t.src, t.dst);
    return acc;
  }
};

// Largest absolute deviation of the plan's marginals from (mu, nu). Mass sent
// from or to points outside the supports counts as deviation.
inline double marginal_error(const Flow& flow, const Distribution& mu, const Distribution& nu) {
  std::vector<double> out(mu.support_size(), 0.0);
  std::vector<double> in(nu.support_size(), 0.0);
  double stray = 0.0;
  auto index_of = [](const Distribution& d, PointId p) -> std::ptrdiff_t {
    const auto e = d.entries();
    auto it = std::lower_bound(e.begin(), e.end(), p, [](const MassEntry& m, PointId q) { return m.point < q; });
    return (it != e.end() && it->point == p) ? it - e.begin() : -1;
  };
  for (const auto& t : flow.triples) {
    const auto i = index_of(mu, t.src);
    const auto j = index_of(nu, t.dst);
    if (i < 0 || j < 0) {
      stray += std::abs(t.mass);
      continue;
    }
    out[static_cast<std::size_t>(i)] += t.mass;
    in[static_cast<std::size_t>(j)] += t.mass;
  }
  double err = stray;
  for (std::size_t i = 0; i < out.size(); ++i) err = std::max(err, std::abs(out[i] - mu.entries()[i].mass));
  for (std::size_t j = 0; j < in.size(); ++j) err = std::max(err, std::abs(in[j] - nu.entries()[j].mass));
  return err;
}

}  // namespace w1
