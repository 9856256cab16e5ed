#pragma once

#include <algorithm>
#include <vector>

#include "w1/error.hpp"
#include "w1/flow.hpp"
#include "w1/ground.hpp"
#include "w1/quadtree.hpp"

namespace w1 {

namespace detail {

inline void check_tree_inputs(const QuadtreeIndex& index, const Distribution& mu, const Distribution& nu) {
  if (mu.empty() || nu.empty()) throw InvalidArgument("tree flow needs nonempty supports");
  if (mu.max_point() >= index.point_count() || nu.max_point() >= index.point_count()) {
    throw InvalidArgument("distribution is not bound to the quadtree's ground set");
  }
}

}  // namespace detail

// Demand residuals below this are treated as exhausted.
inline constexpr double kResidualEpsilon = 1e-12;

/// Optimal flow for the tree metric, computed bottom-up: every node matches
/// the unmatched mu- and nu-demands collected from its subtree and forwards
/// the remainder (of one sign only) to its parent. Leaves are processed like
/// any other node, so a point carrying both mu- and nu-mass is matched with
/// itself first. Within a node, demands are matched in ascending point-id
/// order on both sides. O(s h log s) for support size s and height h.
inline Flow tree_flow(const QuadtreeIndex& index, const Distribution& mu, const Distribution& nu) {
  detail::check_tree_inputs(index, mu, nu);

  // Active nodes: every ancestor of a support leaf, ascending by id. Node ids
  // are breadth-first, so walking them backwards is a bottom-up order.
  std::vector<NodeId> active;
  active.reserve((mu.support_size() + nu.support_size()) * (index.height() + 1));
  auto add_path = [&](PointId p) {
    for (NodeId v = index.leaf_of(p); v != kNoNode; v = index.node(v).parent) active.push_back(v);
  };
  for (const auto& e : mu.entries()) add_path(e.point);
  for (const auto& e : nu.entries()) add_path(e.point);
  std::sort(active.begin(), active.end());
  active.erase(std::unique(active.begin(), active.end()), active.end());
  auto slot_of = [&](NodeId v) {
    return static_cast<std::uint32_t>(std::lower_bound(active.begin(), active.end(), v) - active.begin());
  };

  // Unmatched demands live in one pool as singly linked lists per node and side.
  constexpr std::uint32_t kEnd = 0xffffffffu;
  struct Item {
    PointId point;
    double mass;
    std::uint32_t next;
  };
  struct List {
    std::uint32_t head = kEnd;
    std::uint32_t tail = kEnd;
    bool empty() const noexcept { return head == kEnd; }
  };
  std::vector<Item> pool;
  pool.reserve(mu.support_size() + nu.support_size());
  std::vector<List> supply(active.size());
  std::vector<List> demand(active.size());
  auto push = [&](List& list, std::uint32_t item) {
    pool[item].next = kEnd;
    if (list.empty()) {
      list.head = item;
    } else {
      pool[list.tail].next = item;
    }
    list.tail = item;
  };
  auto splice = [&](List& into, List& from) {
    if (from.empty()) return;
    if (into.empty()) {
      into = from;
    } else {
      pool[into.tail].next = from.head;
      into.tail = from.tail;
    }
    from = List{};
  };
  for (const auto& e : mu.entries()) {
    pool.push_back({e.point, e.mass, kEnd});
    push(supply[slot_of(index.leaf_of(e.point))], static_cast<std::uint32_t>(pool.size() - 1));
  }
  for (const auto& e : nu.entries()) {
    pool.push_back({e.point, e.mass, kEnd});
    push(demand[slot_of(index.leaf_of(e.point))], static_cast<std::uint32_t>(pool.size() - 1));
  }

  Flow flow;
  flow.triples.reserve(mu.support_size() + nu.support_size());
  std::vector<std::uint32_t> src;
  std::vector<std::uint32_t> dst;
  auto collect = [&](List& list, std::vector<std::uint32_t>& out) {
    out.clear();
    for (std::uint32_t it = list.head; it != kEnd; it = pool[it].next) out.push_back(it);
    std::sort(out.begin(), out.end(), [&](std::uint32_t a, std::uint32_t b) { return pool[a].point < pool[b].point; });
    list = List{};
  };
  for (std::size_t k = active.size(); k-- > 0;) {
    const NodeId parent = index.node(active[k]).parent;
    if (!supply[k].empty() && !demand[k].empty()) {
      collect(supply[k], src);
      collect(demand[k], dst);
      std::size_t i = 0;
      std::size_t j = 0;
      while (i < src.size() && j < dst.size()) {
        Item& a = pool[src[i]];
        Item& b = pool[dst[j]];
        const double m = std::min(a.mass, b.mass);
        flow.triples.push_back({a.point, b.point, m});
        a.mass -= m;
        b.mass -= m;
        if (a.mass <= kResidualEpsilon) ++i;
        if (b.mass <= kResidualEpsilon) ++j;
      }
      for (; i < src.size(); ++i) push(supply[k], src[i]);
      for (; j < dst.size(); ++j) push(demand[k], dst[j]);
    }
    if (parent == kNoNode) {
      double left = 0.0;
      for (std::uint32_t it = supply[k].head; it != kEnd; it = pool[it].next) left += pool[it].mass;
      for (std::uint32_t it = demand[k].head; it != kEnd; it = pool[it].next) left += pool[it].mass;
      if (left > 1e-9) throw ComputeError("tree flow left unmatched mass at the root");
      break;
    }
    const std::uint32_t up = slot_of(parent);
    splice(supply[up], supply[k]);
    splice(demand[up], demand[k]);
  }
  return flow;
}

/// Flowtree estimate: the tree-optimal flow priced in the ground metric.
/// Never below the exact W1 since the flow is a feasible transport plan.
inline double flowtree_estimate(const QuadtreeIndex& index, const GroundSet& ground, const Distribution& mu,
                                const Distribution& nu, Metric metric = Metric::euclidean) {
  if (index.point_count() != ground.size() || index.dim() != ground.dim()) {
    throw InvalidArgument("quadtree and ground set do not match");
  }
  return tree_flow(index, mu, nu).cost(ground, metric);
}

// Tree-metric cost of a flow; equals the closed-form quadtree distance for the
// flow returned by tree_flow.
inline double tree_cost(const QuadtreeIndex& index, const Flow& flow) {
  return flow.cost_with([&](PointId a, PointId b) { return index.tree_distance(a, b); });
}

}  // namespace w1
