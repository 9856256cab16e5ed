#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <vector>

#include "w1/error.hpp"
#include "w1/ground.hpp"
#include "w1/io.hpp"
#include "w1/random.hpp"

namespace w1 {

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = 0xffffffffu;

struct QuadtreeNode {
  int level = 0;             // edge to the parent weighs 2^level
  NodeId parent = kNoNode;
  std::uint32_t depth = 0;   // root is depth 0
  std::uint32_t begin = 0;   // range of QuadtreeIndex::points() beneath this node
  std::uint32_t end = 0;
  NodeId first_child = kNoNode;
  std::uint32_t child_count = 0;

  std::uint32_t point_count() const noexcept { return end - begin; }
  bool is_leaf() const noexcept { return child_count == 0; }

  friend bool operator==(const QuadtreeNode&, const QuadtreeNode&) = default;
};

/// Coordinate v of the l1 embedding holds 2^level(v) * mu(v), where mu(v) is
/// the mass beneath v. Sorted by node id.
struct SparseEmbedding {
  std::vector<std::pair<NodeId, double>> entries;
};

inline double l1_distance(const SparseEmbedding& a, const SparseEmbedding& b) noexcept {
  double acc = 0.0;
  auto i = a.entries.begin();
  auto j = b.entries.begin();
  while (i != a.entries.end() && j != b.entries.end()) {
    if (i->first == j->first) {
      acc += std::abs(i->second - j->second);
      ++i;
      ++j;
    } else if (i->first < j->first) {
      acc += i->second;
      ++i;
    } else {
      acc += j->second;
      ++j;
    }
  }
  for (; i != a.entries.end(); ++i) acc += i->second;
  for (; j != b.entries.end(); ++j) acc += j->second;
  return acc;
}

/// Randomly shifted hierarchy of hypercubes over a ground set.
///
/// The root cell is [-phi, phi]^d + shift with the shift drawn uniformly from
/// [0, phi]^d, so it encloses every (translated) ground point. Cells are halved
/// along every axis; only nonempty children are materialized, and a cell with a
/// single point (or at `max_depth`) is a leaf. Cells are half-open per axis.
/// Node ids are assigned breadth-first, so parents precede children and
/// children of one node are contiguous.
class QuadtreeIndex {
 public:
  static constexpr std::uint32_t kDefaultMaxDepth = 32;
  static constexpr std::uint32_t kMaxDepthLimit = 62;

  QuadtreeIndex() = default;

  static QuadtreeIndex build(const GroundSet& ground, std::uint64_t seed,
                             std::uint32_t max_depth = kDefaultMaxDepth) {
    if (ground.empty()) throw InvalidArgument("cannot build a quadtree over an empty ground set");
    if (max_depth < 1 || max_depth > kMaxDepthLimit) {
      throw InvalidArgument("max_depth must lie in [1, " + std::to_string(kMaxDepthLimit) + "]");
    }
    QuadtreeIndex t;
    t.seed_ = seed;
    t.max_depth_ = max_depth;
    t.dim_ = static_cast<std::uint32_t>(ground.dim());
    t.point_count_ = static_cast<std::uint32_t>(ground.size());
    t.phi_ = ground.phi() > 0.0 ? ground.phi() : 1.0;
    t.root_level_ = ceil_log2(t.phi_) + 1;

    CounterRng rng(seed, /*stream=*/0x5157);
    t.shift_.resize(t.dim_);
    for (auto& s : t.shift_) s = rng.uniform() * t.phi_;

    const std::size_t n = ground.size();
    const std::size_t d = t.dim_;
    // Position of each coordinate inside the root cell, scaled to [0, 1].
    std::vector<double> unit(n * d);
    for (std::size_t p = 0; p < n; ++p) {
      const auto x = ground.point(static_cast<PointId>(p));
      for (std::size_t a = 0; a < d; ++a) {
        unit[p * d + a] = (x[a] - t.low(a)) / (2.0 * t.phi_);
      }
    }

    t.order_.resize(n);
    std::iota(t.order_.begin(), t.order_.end(), PointId{0});
    t.leaf_of_.assign(n, kNoNode);
    t.nodes_.push_back({t.root_level_, kNoNode, 0, 0, static_cast<std::uint32_t>(n), kNoNode, 0});

    const std::size_t words = (d + 63) / 64;
    std::vector<std::uint64_t> keys;
    std::vector<std::uint32_t> slots;
    std::vector<PointId> scratch;
    for (NodeId v = 0; v < t.nodes_.size(); ++v) {
      const QuadtreeNode node = t.nodes_[v];
      if (node.point_count() == 1 || node.depth == max_depth) {
        for (std::uint32_t i = node.begin; i < node.end; ++i) t.leaf_of_[t.order_[i]] = v;
        continue;
      }
      const std::uint32_t child_depth = node.depth + 1;
      const std::uint32_t count = node.point_count();
      keys.assign(static_cast<std::size_t>(count) * words, 0);
      for (std::uint32_t i = 0; i < count; ++i) {
        const PointId p = t.order_[node.begin + i];
        for (std::size_t a = 0; a < d; ++a) {
          if (cell_index(unit[p * d + a], child_depth) & 1u) {
            keys[i * words + a / 64] |= std::uint64_t{1} << (a % 64);
          }
        }
      }
      slots.resize(count);
      std::iota(slots.begin(), slots.end(), 0u);
      auto key_less = [&](std::uint32_t x, std::uint32_t y) {
        for (std::size_t w = 0; w < words; ++w) {
          const auto kx = keys[x * words + w];
          const auto ky = keys[y * words + w];
          if (kx != ky) return kx < ky;
        }
        return false;
      };
      std::sort(slots.begin(), slots.end(), [&](std::uint32_t x, std::uint32_t y) {
        if (key_less(x, y)) return true;
        if (key_less(y, x)) return false;
        return t.order_[node.begin + x] < t.order_[node.begin + y];
      });
      scratch.resize(count);
      for (std::uint32_t i = 0; i < count; ++i) scratch[i] = t.order_[node.begin + slots[i]];
      std::copy(scratch.begin(), scratch.end(), t.order_.begin() + node.begin);

      t.nodes_[v].first_child = static_cast<NodeId>(t.nodes_.size());
      std::uint32_t group_start = 0;
      for (std::uint32_t i = 1; i <= count; ++i) {
        if (i == count || key_less(slots[group_start], slots[i])) {
          t.nodes_.push_back({node.level - 1, v, child_depth, node.begin + group_start, node.begin + i,
                              kNoNode, 0});
          ++t.nodes_[v].child_count;
          group_start = i;
        }
      }
    }
    for (const auto& node : t.nodes_) t.height_ = std::max(t.height_, node.depth);
    return t;
  }

  // Integer cell coordinate along one axis at `depth`, given the position in
  // the root cell scaled to [0, 1]. Scaling by 2^depth is exact, so indices
  // nest across depths.
  static std::uint64_t cell_index(double unit, std::uint32_t depth) noexcept {
    const std::uint64_t cells = std::uint64_t{1} << depth;
    const double scaled = std::floor(std::ldexp(unit, static_cast<int>(depth)));
    if (scaled <= 0.0) return 0;
    const auto idx = static_cast<std::uint64_t>(scaled);
    return std::min(idx, cells - 1);
  }

  static int ceil_log2(double x) noexcept {
    int e = 0;
    const double m = std::frexp(x, &e);
    return m == 0.5 ? e - 1 : e;
  }

  static double level_weight(int level) noexcept { return std::ldexp(1.0, level); }

  std::span<const QuadtreeNode> nodes() const noexcept { return nodes_; }
  const QuadtreeNode& node(NodeId v) const noexcept { return nodes_[v]; }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  NodeId root() const noexcept { return 0; }
  NodeId leaf_of(PointId p) const noexcept { return leaf_of_[p]; }
  std::span<const NodeId> leaves() const noexcept { return leaf_of_; }
  // Ground points beneath `v`.
  std::span<const PointId> points(NodeId v) const noexcept {
    return std::span<const PointId>(order_).subspan(nodes_[v].begin, nodes_[v].point_count());
  }
  std::span<const PointId> point_order() const noexcept { return order_; }

  std::span<const double> shift() const noexcept { return shift_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::uint32_t max_depth() const noexcept { return max_depth_; }
  std::uint32_t height() const noexcept { return height_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t point_count() const noexcept { return point_count_; }
  double phi() const noexcept { return phi_; }
  int root_level() const noexcept { return root_level_; }

  double low(std::size_t axis) const noexcept { return shift_[axis] - phi_; }
  double side(NodeId v) const noexcept { return std::ldexp(2.0 * phi_, -static_cast<int>(nodes_[v].depth)); }
  double weight(NodeId v) const noexcept { return level_weight(nodes_[v].level); }

  std::vector<double> center(NodeId v, const GroundSet& ground) const {
    const auto& node = nodes_[v];
    const auto x = ground.point(order_[node.begin]);
    const double s = side(v);
    std::vector<double> c(dim_);
    for (std::size_t a = 0; a < dim_; ++a) {
      const double unit = (x[a] - low(a)) / (2.0 * phi_);
      c[a] = low(a) + (static_cast<double>(cell_index(unit, node.depth)) + 0.5) * s;
    }
    return c;
  }

  bool is_ancestor(NodeId ancestor, NodeId v) const noexcept {
    while (v != kNoNode && nodes_[v].depth > nodes_[ancestor].depth) v = nodes_[v].parent;
    return v == ancestor;
  }

  bool contains(NodeId v, PointId p) const noexcept { return is_ancestor(v, leaf_of_[p]); }

  NodeId lca(NodeId a, NodeId b) const noexcept {
    while (nodes_[a].depth > nodes_[b].depth) a = nodes_[a].parent;
    while (nodes_[b].depth > nodes_[a].depth) b = nodes_[b].parent;
    while (a != b) {
      a = nodes_[a].parent;
      b = nodes_[b].parent;
    }
    return a;
  }

  // Total edge weight on the path between the leaves of two points.
  double tree_distance(PointId x, PointId y) const noexcept {
    NodeId a = leaf_of_[x];
    NodeId b = leaf_of_[y];
    const NodeId top = lca(a, b);
    double acc = 0.0;
    for (; a != top; a = nodes_[a].parent) acc += weight(a);
    for (; b != top; b = nodes_[b].parent) acc += weight(b);
    return acc;
  }

  void check_point(PointId p) const {
    if (p >= leaf_of_.size() || leaf_of_[p] == kNoNode) {
      throw ComputeError("point " + std::to_string(p) + " has no leaf in this quadtree");
    }
  }

  SparseEmbedding embed(const Distribution& mu) const {
    std::vector<std::pair<NodeId, double>> raw;
    raw.reserve(mu.support_size() * (height_ + 1));
    for (const auto& e : mu.entries()) {
      check_point(e.point);
      for (NodeId v = leaf_of_[e.point]; v != kNoNode; v = nodes_[v].parent) raw.emplace_back(v, e.mass);
    }
    std::sort(raw.begin(), raw.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    SparseEmbedding out;
    for (const auto& [v, m] : raw) {
      if (!out.entries.empty() && out.entries.back().first == v) {
        out.entries.back().second += m;
      } else {
        out.entries.emplace_back(v, m);
      }
    }
    for (auto& [v, m] : out.entries) m *= weight(v);
    return out;
  }

  // Tree W1 in closed form: sum over nodes of 2^level |mu(v) - nu(v)|.
  double distance(const Distribution& mu, const Distribution& nu) const {
    return l1_distance(embed(mu), embed(nu));
  }

  void write(std::ostream& out) const {
    out.write("W1QT", 4);
    detail::put_le(out, std::uint32_t{1});
    detail::put_le(out, seed_);
    detail::put_le(out, max_depth_);
    detail::put_le(out, point_count_);
    detail::put_le(out, dim_);
    detail::put_f64(out, phi_);
    detail::put_le(out, static_cast<std::int32_t>(root_level_));
    for (double s : shift_) detail::put_f64(out, s);
    detail::put_le(out, static_cast<std::uint32_t>(nodes_.size()));
    for (const auto& n : nodes_) {
      detail::put_le(out, static_cast<std::int32_t>(n.level));
      detail::put_le(out, n.parent);
      detail::put_le(out, n.depth);
      detail::put_le(out, n.begin);
      detail::put_le(out, n.end);
      detail::put_le(out, n.first_child);
      detail::put_le(out, n.child_count);
    }
    for (PointId p : order_) detail::put_le(out, p);
    for (NodeId v : leaf_of_) detail::put_le(out, v);
  }

  // Reads an index and checks it against the ground set it will be used with.
  static QuadtreeIndex read(std::istream& in, const GroundSet& ground) {
    detail::expect_magic(in, "W1QT");
    if (detail::get_le<std::uint32_t>(in, "version") != 1) throw ParseError("unsupported index version");
    QuadtreeIndex t;
    t.seed_ = detail::get_le<std::uint64_t>(in, "seed");
    t.max_depth_ = detail::get_le<std::uint32_t>(in, "max_depth");
    t.point_count_ = detail::get_le<std::uint32_t>(in, "point count");
    t.dim_ = detail::get_le<std::uint32_t>(in, "dimension");
    t.phi_ = detail::get_f64(in, "phi");
    t.root_level_ = detail::get_le<std::int32_t>(in, "root level");
    if (t.point_count_ != ground.size() || t.dim_ != ground.dim()) {
      throw ParseError("index was built for " + std::to_string(t.point_count_) + " points in dimension " +
                       std::to_string(t.dim_) + ", ground set has " + std::to_string(ground.size()) +
                       " in dimension " + std::to_string(ground.dim()));
    }
    t.shift_.resize(t.dim_);
    for (auto& s : t.shift_) s = detail::get_f64(in, "shift");
    const auto count = detail::get_le<std::uint32_t>(in, "node count");
    if (count == 0) throw ParseError("index has no nodes");
    t.nodes_.resize(count);
    for (auto& n : t.nodes_) {
      n.level = detail::get_le<std::int32_t>(in, "node");
      n.parent = detail::get_le<std::uint32_t>(in, "node");
      n.depth = detail::get_le<std::uint32_t>(in, "node");
      n.begin = detail::get_le<std::uint32_t>(in, "node");
      n.end = detail::get_le<std::uint32_t>(in, "node");
      n.first_child = detail::get_le<std::uint32_t>(in, "node");
      n.child_count = detail::get_le<std::uint32_t>(in, "node");
      t.height_ = std::max(t.height_, n.depth);
    }
    t.order_.resize(t.point_count_);
    for (auto& p : t.order_) p = detail::get_le<std::uint32_t>(in, "point order");
    t.leaf_of_.resize(t.point_count_);
    for (auto& v : t.leaf_of_) v = detail::get_le<std::uint32_t>(in, "leaf map");
    for (NodeId v = 0; v < count; ++v) {
      const auto& n = t.nodes_[v];
      const bool parent_ok = v == 0 ? n.parent == kNoNode : n.parent < v;
      if (!parent_ok || n.begin > n.end || n.end > t.point_count_ ||
          (n.child_count > 0 && (n.first_child <= v || n.first_child + n.child_count > count))) {
        throw ParseError("corrupt index node " + std::to_string(v));
      }
    }
    for (PointId p = 0; p < t.point_count_; ++p) {
      if (t.leaf_of_[p] >= count || t.order_[p] >= t.point_count_) throw ParseError("corrupt leaf map");
    }
    return t;
  }

  friend bool operator==(const QuadtreeIndex&, const QuadtreeIndex&) = default;

 private:
  std::uint64_t seed_ = 0;
  std::uint32_t max_depth_ = kDefaultMaxDepth;
  std::uint32_t point_count_ = 0;
  std::uint32_t dim_ = 0;
  std::uint32_t height_ = 0;
  double phi_ = 1.0;
  int root_level_ = 0;
  std::vector<double> shift_;
  std::vector<QuadtreeNode> nodes_;
  std::vector<PointId> order_;
  std::vector<NodeId> leaf_of_;
};

inline QuadtreeIndex build_quadtree(const GroundSet& ground, std::uint64_t seed,
                                    std::uint32_t max_depth = QuadtreeIndex::kDefaultMaxDepth) {
  return QuadtreeIndex::build(ground, seed, max_depth);
}

inline SparseEmbedding embed_distribution(const QuadtreeIndex& index, const Distribution& mu) {
  return index.embed(mu);
}

inline double quadtree_distance(const QuadtreeIndex& index, const Distribution& mu, const Distribution& nu) {
  return index.distance(mu, nu);
}

inline void save_quadtree(const std::filesystem::path& path, const QuadtreeIndex& index) {
  auto out = detail::open_out(path, true);
  index.write(out);
  if (!out) throw ParseError("write failed for '" + path.string() + "'");
}

inline QuadtreeIndex load_quadtree(const std::filesystem::path& path, const GroundSet& ground) {
  auto in = detail::open_in(path, true);
  try {
    return QuadtreeIndex::read(in, ground);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace w1
