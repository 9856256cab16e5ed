#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "w1/error.hpp"

namespace w1 {

using PointId = std::uint32_t;

enum class Metric { euclidean, l1 };

inline std::string_view to_string(Metric m) { return m == Metric::euclidean ? "euclidean" : "l1"; }

inline Metric parse_metric(std::string_view name) {
  if (name == "euclidean" || name == "l2") return Metric::euclidean;
  if (name == "l1") return Metric::l1;
  throw InvalidArgument("unknown metric '" + std::string(name) + "'");
}

inline double distance(std::span<const double> a, std::span<const double> b, Metric metric) {
  double acc = 0.0;
  if (metric == Metric::l1) {
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
    return acc;
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

/// The finite point set all distributions live on. Coordinates are translated
/// at construction so that every axis starts at 0; `phi()` is the largest
/// per-axis extent afterwards. Immutable once built.
class GroundSet {
 public:
  GroundSet() = default;

  // `coords` is row-major, `coords.size() == count * dim`. Tokens are optional
  // (empty, or one per point).
  static GroundSet from_points(std::vector<double> coords, std::size_t dim,
                               std::vector<std::string> tokens = {}) {
    if (dim == 0) throw InvalidArgument("ground set dimension must be positive");
    if (coords.empty()) throw InvalidArgument("ground set is empty");
    if (coords.size() % dim != 0) throw InvalidArgument("coordinate count is not a multiple of dim");
    const std::size_t count = coords.size() / dim;
    if (!tokens.empty() && tokens.size() != count) {
      throw InvalidArgument("token table size does not match point count");
    }
    if (count > std::size_t{0xffffffffu}) throw InvalidArgument("too many points");

    GroundSet g;
    g.dim_ = dim;
    g.origin_.assign(dim, 0.0);
    std::vector<double> hi(dim);
    for (std::size_t a = 0; a < dim; ++a) g.origin_[a] = hi[a] = coords[a];
    for (std::size_t p = 1; p < count; ++p) {
      for (std::size_t a = 0; a < dim; ++a) {
        const double c = coords[p * dim + a];
        g.origin_[a] = std::min(g.origin_[a], c);
        hi[a] = std::max(hi[a], c);
      }
    }
    g.phi_ = 0.0;
    for (std::size_t a = 0; a < dim; ++a) {
      if (!std::isfinite(g.origin_[a]) || !std::isfinite(hi[a])) {
        throw InvalidArgument("ground set has non-finite coordinates");
      }
      g.phi_ = std::max(g.phi_, hi[a] - g.origin_[a]);
    }
    for (std::size_t p = 0; p < count; ++p) {
      for (std::size_t a = 0; a < dim; ++a) coords[p * dim + a] -= g.origin_[a];
    }
    g.coords_ = std::move(coords);
    g.tokens_ = std::move(tokens);
    g.token_index_.reserve(g.tokens_.size());
    for (std::size_t p = 0; p < g.tokens_.size(); ++p) {
      // First occurrence wins when a token repeats.
      g.token_index_.emplace(g.tokens_[p], static_cast<PointId>(p));
    }
    return g;
  }

  std::size_t size() const noexcept { return dim_ == 0 ? 0 : coords_.size() / dim_; }
  std::size_t dim() const noexcept { return dim_; }
  double phi() const noexcept { return phi_; }
  bool empty() const noexcept { return coords_.empty(); }

  std::span<const double> point(PointId id) const noexcept {
    return {coords_.data() + static_cast<std::size_t>(id) * dim_, dim_};
  }
  std::span<const double> coordinates() const noexcept { return coords_; }
  // Per-axis amount subtracted at load time.
  std::span<const double> origin() const noexcept { return origin_; }

  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  bool has_tokens() const noexcept { return !tokens_.empty(); }

  std::optional<PointId> find(std::string_view token) const {
    if (auto it = token_index_.find(std::string(token)); it != token_index_.end()) return it->second;
    return std::nullopt;
  }

  double distance(PointId a, PointId b, Metric metric = Metric::euclidean) const noexcept {
    return w1::distance(point(a), point(b), metric);
  }

 private:
  std::size_t dim_ = 0;
  double phi_ = 0.0;
  std::vector<double> coords_;
  std::vector<double> origin_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, PointId> token_index_;
};

struct MassEntry {
  PointId point;
  double mass;

  friend bool operator==(const MassEntry&, const MassEntry&) = default;
};

/// Sparse probability measure over ground point ids. Entries are sorted by
/// point id, masses are strictly positive and sum to one.
class Distribution {
 public:
  Distribution() = default;

  // Drops zero masses and renormalizes. Throws on negative or non-finite
  // masses, repeated point ids, or zero total mass.
  static Distribution normalized(std::vector<MassEntry> entries) {
    double total = 0.0;
    for (const auto& e : entries) {
      if (!std::isfinite(e.mass) || e.mass < 0.0) {
        throw InvalidArgument("distribution masses must be finite and nonnegative");
      }
      total += e.mass;
    }
    std::erase_if(entries, [](const MassEntry& e) { return e.mass == 0.0; });
    if (entries.empty() || !(total > 0.0)) throw InvalidArgument("distribution has zero total mass");
    std::sort(entries.begin(), entries.end(),
              [](const MassEntry& a, const MassEntry& b) { return a.point < b.point; });
    for (std::size_t i = 1; i < entries.size(); ++i) {
      if (entries[i].point == entries[i - 1].point) {
        throw InvalidArgument("distribution repeats point id " + std::to_string(entries[i].point));
      }
    }
    for (auto& e : entries) e.mass /= total;
    Distribution d;
    d.entries_ = std::move(entries);
    return d;
  }

  static Distribution uniform(std::vector<PointId> points) {
    std::vector<MassEntry> entries;
    entries.reserve(points.size());
    for (PointId p : points) entries.push_back({p, 1.0});
    return normalized(std::move(entries));
  }

  static Distribution dirac(PointId p) { return normalized({{p, 1.0}}); }

  std::span<const MassEntry> entries() const noexcept { return entries_; }
  std::size_t support_size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  double mass_of(PointId p) const noexcept {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), p,
                               [](const MassEntry& e, PointId q) { return e.point < q; });
    return (it != entries_.end() && it->point == p) ? it->mass : 0.0;
  }

  PointId max_point() const noexcept { return entries_.empty() ? 0 : entries_.back().point; }

  friend bool operator==(const Distribution&, const Distribution&) = default;

 private:
  std::vector<MassEntry> entries_;
};

inline void check_bound(const Distribution& mu, const GroundSet& ground) {
  if (!mu.empty() && mu.max_point() >= ground.size()) {
    throw InvalidArgument("distribution references point " + std::to_string(mu.max_point()) +
                          " outside a ground set of " + std::to_string(ground.size()) + " points");
  }
}

/// Named distributions over one ground set.
struct Dataset {
  std::vector<std::string> ids;
  std::vector<Distribution> items;

  std::size_t size() const noexcept { return items.size(); }
  const Distribution& operator[](std::size_t i) const noexcept { return items[i]; }

  void push_back(std::string id, Distribution d) {
    ids.push_back(std::move(id));
    items.push_back(std::move(d));
  }

  double average_support() const noexcept {
    if (items.empty()) return 0.0;
    double total = 0.0;
    for (const auto& d : items) total += static_cast<double>(d.support_size());
    return total / static_cast<double>(items.size());
  }
};

}  // namespace w1
