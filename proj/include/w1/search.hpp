#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "w1/baselines.hpp"
#include "w1/error.hpp"
#include "w1/exact.hpp"
#include "w1/flowtree.hpp"
#include "w1/ground.hpp"
#include "w1/quadtree.hpp"

namespace w1 {

enum class Method { mean, overlap, tfidf, quadtree, flowtree, rwmd, sinkhorn, exact };

struct EstimatorSpec {
  Method method = Method::exact;
  SinkhornParams sinkhorn{};

  Direction direction() const noexcept {
    return method == Method::overlap || method == Method::tfidf ? Direction::higher_is_closer
                                                                : Direction::lower_is_closer;
  }

  std::string name() const {
    switch (method) {
      case Method::mean: return "mean";
      case Method::overlap: return "overlap";
      case Method::tfidf: return "tfidf";
      case Method::quadtree: return "quadtree";
      case Method::flowtree: return "flowtree";
      case Method::rwmd: return "rwmd";
      case Method::sinkhorn: return "sinkhorn-" + std::to_string(sinkhorn.iterations);
      case Method::exact: return "exact";
    }
    return "?";
  }

  friend bool operator==(const EstimatorSpec& a, const EstimatorSpec& b) {
    if (a.method != b.method) return false;
    return a.method != Method::sinkhorn ||
           (a.sinkhorn.iterations == b.sinkhorn.iterations && a.sinkhorn.eta == b.sinkhorn.eta);
  }
};

/// Accepts mean, overlap, tfidf, quadtree, flowtree, rwmd, exact, sinkhorn and
/// sinkhorn-<k> (case-insensitive; "r-wmd" and "exact-w1" are aliases).
/// Bare "sinkhorn" takes its parameters from `sinkhorn_defaults`.
inline EstimatorSpec parse_estimator(std::string_view text, SinkhornParams sinkhorn_defaults = {}) {
  std::string name(text);
  for (auto& ch : name) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  EstimatorSpec spec;
  spec.sinkhorn = sinkhorn_defaults;
  if (name == "mean") spec.method = Method::mean;
  else if (name == "overlap") spec.method = Method::overlap;
  else if (name == "tfidf" || name == "tf-idf") spec.method = Method::tfidf;
  else if (name == "quadtree") spec.method = Method::quadtree;
  else if (name == "flowtree") spec.method = Method::flowtree;
  else if (name == "rwmd" || name == "r-wmd") spec.method = Method::rwmd;
  else if (name == "exact" || name == "exact-w1") spec.method = Method::exact;
  else if (name == "sinkhorn") spec.method = Method::sinkhorn;
  else if (name.starts_with("sinkhorn-")) {
    spec.method = Method::sinkhorn;
    const std::string_view k = std::string_view(name).substr(9);
    int iters = 0;
    auto [ptr, ec] = std::from_chars(k.data(), k.data() + k.size(), iters);
    if (ec != std::errc{} || ptr != k.data() + k.size() || iters < 1) {
      throw InvalidArgument("bad Sinkhorn iteration count in '" + std::string(text) + "'");
    }
    spec.sinkhorn.iterations = iters;
  } else {
    throw InvalidArgument("unknown method '" + std::string(text) + "'");
  }
  return spec;
}

/// Query-side data computed once and reused across a dataset scan.
struct PreparedQuery {
  const Distribution* distribution = nullptr;
  std::vector<double> mean;
  SparseEmbedding embedding;
};

/// Scores a query against dataset items under any estimator. Holds references
/// to the ground set, dataset and (optional) quadtree; they must outlive it.
/// Per-item means, embeddings and the IDF table are precomputed.
class Searcher {
 public:
  Searcher(const GroundSet& ground, const Dataset& dataset, const QuadtreeIndex* index = nullptr,
           Metric metric = Metric::euclidean)
      : ground_(&ground), dataset_(&dataset), index_(index), metric_(metric) {
    if (dataset.size() == 0) throw InvalidArgument("dataset is empty");
    if (index && (index->point_count() != ground.size() || index->dim() != ground.dim())) {
      throw InvalidArgument("quadtree was built over a different ground set");
    }
    for (const auto& d : dataset.items) check_bound(d, ground);
    means_.reserve(dataset.size());
    for (const auto& d : dataset.items) means_.push_back(mean_point(ground, d));
    if (index) {
      embeddings_.reserve(dataset.size());
      for (const auto& d : dataset.items) embeddings_.push_back(index->embed(d));
    }
    idf_ = build_idf(dataset);
  }

  const GroundSet& ground() const noexcept { return *ground_; }
  const Dataset& dataset() const noexcept { return *dataset_; }
  const QuadtreeIndex* index() const noexcept { return index_; }
  const IdfTable& idf() const noexcept { return idf_; }
  Metric metric() const noexcept { return metric_; }
  std::size_t size() const noexcept { return dataset_->size(); }

  PreparedQuery prepare(const Distribution& query) const {
    check_bound(query, *ground_);
    PreparedQuery q;
    q.distribution = &query;
    q.mean = mean_point(*ground_, query);
    if (index_) q.embedding = index_->embed(query);
    return q;
  }

  Estimate score(const EstimatorSpec& spec, const PreparedQuery& q, std::size_t item) const {
    const Distribution& mu = dataset_->items[item];
    const Distribution& nu = *q.distribution;
    switch (spec.method) {
      case Method::mean:
        return {distance(means_[item], q.mean, metric_), Direction::lower_is_closer};
      case Method::overlap:
        return overlap_score(mu, nu);
      case Method::tfidf:
        return tfidf_score(idf_, mu, nu);
      case Method::quadtree:
        require_index();
        return {l1_distance(embeddings_[item], q.embedding), Direction::lower_is_closer};
      case Method::flowtree:
        require_index();
        return {tree_flow(*index_, mu, nu).cost(*ground_, metric_), Direction::lower_is_closer};
      case Method::rwmd:
        return rwmd_estimate(*ground_, mu, nu, metric_);
      case Method::sinkhorn:
        return sinkhorn_estimate(*ground_, mu, nu, spec.sinkhorn, metric_);
      case Method::exact:
        return {exact_w1(*ground_, mu, nu, metric_).value, Direction::lower_is_closer};
    }
    throw InvalidArgument("unknown method");
  }

 private:
  void require_index() const {
    if (!index_) throw InvalidArgument("quadtree and flowtree need a quadtree index");
  }

  const GroundSet* ground_;
  const Dataset* dataset_;
  const QuadtreeIndex* index_;
  Metric metric_;
  std::vector<std::vector<double>> means_;
  std::vector<SparseEmbedding> embeddings_;
  IdfTable idf_;
};

struct RankedItem {
  std::uint32_t id;
  double score;

  friend bool operator==(const RankedItem&, const RankedItem&) = default;
};

/// Dataset items ordered closest-first; ties go to the lower dataset id.
struct Ranking {
  std::size_t query = 0;
  Direction direction = Direction::lower_is_closer;
  std::vector<RankedItem> items;

  std::size_t size() const noexcept { return items.size(); }
  std::vector<std::uint32_t> top_ids(std::size_t m) const {
    std::vector<std::uint32_t> out;
    for (std::size_t i = 0; i < std::min(m, items.size()); ++i) out.push_back(items[i].id);
    return out;
  }

  friend bool operator==(const Ranking&, const Ranking&) = default;
};

inline void sort_ranking(Ranking& r) {
  const bool lower = r.direction == Direction::lower_is_closer;
  std::sort(r.items.begin(), r.items.end(), [lower](const RankedItem& a, const RankedItem& b) {
    if (a.score != b.score) return lower ? a.score < b.score : a.score > b.score;
    return a.id < b.id;
  });
}

/// Scores every dataset item (or only `restrict`, when given) and sorts.
inline Ranking rank_candidates(const Searcher& searcher, const EstimatorSpec& spec, const PreparedQuery& query,
                               std::optional<std::span<const std::uint32_t>> restrict = std::nullopt) {
  Ranking r;
  r.direction = spec.direction();
  if (restrict) {
    if (restrict->empty()) throw InvalidArgument("restriction set is empty");
    r.items.reserve(restrict->size());
    for (std::uint32_t id : *restrict) {
      if (id >= searcher.size()) throw InvalidArgument("restricted id " + std::to_string(id) + " out of range");
      r.items.push_back({id, searcher.score(spec, query, id).value});
    }
  } else {
    r.items.reserve(searcher.size());
    for (std::uint32_t id = 0; id < searcher.size(); ++id) {
      r.items.push_back({id, searcher.score(spec, query, id).value});
    }
  }
  sort_ranking(r);
  return r;
}

inline Ranking rank_candidates(const Searcher& searcher, const EstimatorSpec& spec, const Distribution& query,
                               std::optional<std::span<const std::uint32_t>> restrict = std::nullopt) {
  return rank_candidates(searcher, spec, searcher.prepare(query), restrict);
}

struct Neighbor {
  std::uint32_t id = 0;
  double distance = 0.0;
};

/// Exact nearest neighbor under W1 (lowest id among ties). Items are visited
/// in order of the mean lower bound and skipped once a lower bound (mean, then
/// R-WMD) exceeds the best exact distance found, which keeps the result exact.
inline Neighbor exact_nearest(const Searcher& searcher, const Distribution& query) {
  const auto q = searcher.prepare(query);
  const EstimatorSpec mean{Method::mean};
  std::vector<RankedItem> order;
  order.reserve(searcher.size());
  for (std::uint32_t id = 0; id < searcher.size(); ++id) order.push_back({id, searcher.score(mean, q, id).value});
  std::sort(order.begin(), order.end(), [](const RankedItem& a, const RankedItem& b) {
    return a.score != b.score ? a.score < b.score : a.id < b.id;
  });
  Neighbor best{0, std::numeric_limits<double>::infinity()};
  auto better = [&](double d, std::uint32_t id) { return d < best.distance || (d == best.distance && id < best.id); };
  const auto& ds = searcher.dataset();
  // Bounds and exact values are computed in floating point; prune with slack.
  auto beyond = [&](double lb) { return lb > best.distance + 1e-12 * (1.0 + best.distance); };
  for (const auto& [id, lb] : order) {
    if (beyond(lb)) break;
    if (beyond(rwmd_estimate(searcher.ground(), ds[id], query, searcher.metric()).value)) continue;
    const double d = exact_w1(searcher.ground(), ds[id], query, searcher.metric()).value;
    if (better(d, id)) best = {id, d};
  }
  return best;
}

}  // namespace w1
