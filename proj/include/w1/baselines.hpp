#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>
#include <vector>

#include "w1/error.hpp"
#include "w1/ground.hpp"

namespace w1 {

enum class Direction { lower_is_closer, higher_is_closer };

struct Estimate {
  double value = 0.0;
  Direction direction = Direction::lower_is_closer;

  // Key that sorts closest-first under ascending order.
  double rank_key() const noexcept { return direction == Direction::lower_is_closer ? value : -value; }
};

inline std::vector<double> mean_point(const GroundSet& ground, const Distribution& mu) {
  std::vector<double> mean(ground.dim(), 0.0);
  for (const auto& e : mu.entries()) {
    const auto x = ground.point(e.point);
    for (std::size_t a = 0; a < mean.size(); ++a) mean[a] += e.mass * x[a];
  }
  return mean;
}

// Distance between the two means; never exceeds W1 under the same norm.
inline Estimate mean_estimate(const GroundSet& ground, const Distribution& mu, const Distribution& nu,
                              Metric metric = Metric::euclidean) {
  if (mu.empty() || nu.empty()) throw InvalidArgument("mean estimate needs nonempty supports");
  return {distance(mean_point(ground, mu), mean_point(ground, nu), metric), Direction::lower_is_closer};
}

inline Estimate overlap_score(const Distribution& mu, const Distribution& nu) {
  auto a = mu.entries();
  auto b = nu.entries();
  std::size_t i = 0;
  std::size_t j = 0;
  std::size_t common = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i].point == b[j].point) {
      ++common;
      ++i;
      ++j;
    } else if (a[i].point < b[j].point) {
      ++i;
    } else {
      ++j;
    }
  }
  return {static_cast<double>(common), Direction::higher_is_closer};
}

/// Inverse document frequency ln(n / df) for every point in some support.
class IdfTable {
 public:
  IdfTable() = default;
  IdfTable(std::unordered_map<PointId, double> weights, std::unordered_map<PointId, std::size_t> df,
           std::size_t n)
      : weights_(std::move(weights)), df_(std::move(df)), n_(n) {}

  // Points never seen in the dataset get weight 0.
  double weight(PointId p) const noexcept {
    auto it = weights_.find(p);
    return it == weights_.end() ? 0.0 : it->second;
  }
  std::size_t document_frequency(PointId p) const noexcept {
    auto it = df_.find(p);
    return it == df_.end() ? 0 : it->second;
  }
  std::size_t document_count() const noexcept { return n_; }
  std::size_t size() const noexcept { return weights_.size(); }

 private:
  std::unordered_map<PointId, double> weights_;
  std::unordered_map<PointId, std::size_t> df_;
  std::size_t n_ = 0;
};

inline IdfTable build_idf(const Dataset& dataset) {
  if (dataset.size() == 0) throw InvalidArgument("cannot build IDF over an empty dataset");
  std::unordered_map<PointId, std::size_t> df;
  for (const auto& d : dataset.items) {
    for (const auto& e : d.entries()) ++df[e.point];
  }
  std::unordered_map<PointId, double> weights;
  weights.reserve(df.size());
  const double n = static_cast<double>(dataset.size());
  for (const auto& [p, count] : df) weights.emplace(p, std::log(n / static_cast<double>(count)));
  return IdfTable(std::move(weights), std::move(df), dataset.size());
}

// Cosine similarity of the idf-weighted mass vectors; 0 if either is all-zero.
inline Estimate tfidf_score(const IdfTable& idf, const Distribution& mu, const Distribution& nu) {
  double dot = 0.0;
  double norm_mu = 0.0;
  double norm_nu = 0.0;
  for (const auto& e : mu.entries()) {
    const double w = e.mass * idf.weight(e.point);
    norm_mu += w * w;
  }
  for (const auto& e : nu.entries()) {
    const double w = e.mass * idf.weight(e.point);
    norm_nu += w * w;
  }
  auto a = mu.entries();
  auto b = nu.entries();
  for (std::size_t i = 0, j = 0; i < a.size() && j < b.size();) {
    if (a[i].point == b[j].point) {
      const double w = idf.weight(a[i].point);
      dot += a[i].mass * w * b[j].mass * w;
      ++i;
      ++j;
    } else if (a[i].point < b[j].point) {
      ++i;
    } else {
      ++j;
    }
  }
  if (norm_mu == 0.0 || norm_nu == 0.0) return {0.0, Direction::higher_is_closer};
  return {dot / (std::sqrt(norm_mu) * std::sqrt(norm_nu)), Direction::higher_is_closer};
}

inline std::vector<double> cost_matrix(const GroundSet& ground, const Distribution& mu, const Distribution& nu,
                                       Metric metric) {
  const auto a = mu.entries();
  const auto b = nu.entries();
  std::vector<double> c(a.size() * b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) c[i * b.size() + j] = ground.distance(a[i].point, b[j].point, metric);
  }
  return c;
}

struct RwmdSides {
  double mu_to_nu = 0.0;  // each mu point sends its mass to its nearest nu point
  double nu_to_mu = 0.0;
};

inline RwmdSides rwmd_sides(const GroundSet& ground, const Distribution& mu, const Distribution& nu,
                            Metric metric = Metric::euclidean) {
  if (mu.empty() || nu.empty()) throw InvalidArgument("R-WMD needs nonempty supports");
  const auto a = mu.entries();
  const auto b = nu.entries();
  const auto c = cost_matrix(ground, mu, nu, metric);
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> col_min(b.size(), kInf);
  RwmdSides sides;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double row_min = kInf;
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double cij = c[i * b.size() + j];
      row_min = std::min(row_min, cij);
      col_min[j] = std::min(col_min[j], cij);
    }
    sides.mu_to_nu += a[i].mass * row_min;
  }
  for (std::size_t j = 0; j < b.size(); ++j) sides.nu_to_mu += b[j].mass * col_min[j];
  return sides;
}

// Larger of the two one-sided relaxations; a lower bound on W1.
inline Estimate rwmd_estimate(const GroundSet& ground, const Distribution& mu, const Distribution& nu,
                              Metric metric = Metric::euclidean) {
  const auto s = rwmd_sides(ground, mu, nu, metric);
  return {std::max(s.mu_to_nu, s.nu_to_mu), Direction::lower_is_closer};
}

struct SinkhornParams {
  int iterations = 1;
  double eta = 30.0;
};

struct SinkhornResult {
  double value = 0.0;
  std::vector<double> plan;  // row-major |supp mu| x |supp nu|
  double row_residual = 0.0;  // l1 gap between plan row sums and mu
  double col_residual = 0.0;
};

/// k rounds of Sinkhorn scaling on K = exp(-eta * C / max C). One round
/// rescales rows to match mu, then columns to match nu.
inline SinkhornResult sinkhorn_plan(const GroundSet& ground, const Distribution& mu, const Distribution& nu,
                                    SinkhornParams params, Metric metric = Metric::euclidean) {
  if (params.iterations < 1) throw InvalidArgument("Sinkhorn needs at least one iteration");
  if (!(params.eta > 0.0)) throw InvalidArgument("Sinkhorn eta must be positive");
  if (mu.empty() || nu.empty()) throw InvalidArgument("Sinkhorn needs nonempty supports");
  const auto a = mu.entries();
  const auto b = nu.entries();
  const std::size_t m = a.size();
  const std::size_t n = b.size();
  const auto c = cost_matrix(ground, mu, nu, metric);
  const double max_cost = *std::max_element(c.begin(), c.end());
  SinkhornResult r;
  if (max_cost == 0.0) {
    r.plan.assign(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) r.plan[i * n + j] = a[i].mass * b[j].mass;
    }
    return r;
  }
  std::vector<double> kernel(m * n);
  for (std::size_t k = 0; k < kernel.size(); ++k) kernel[k] = std::exp(-params.eta * c[k] / max_cost);

  std::vector<double> u(m, 1.0);
  std::vector<double> v(n, 1.0);
  for (int it = 0; it < params.iterations; ++it) {
    for (std::size_t i = 0; i < m; ++i) {
      double kv = 0.0;
      for (std::size_t j = 0; j < n; ++j) kv += kernel[i * n + j] * v[j];
      if (!(kv > 0.0) || !std::isfinite(kv)) {
        throw ComputeError("Sinkhorn kernel row underflowed; use a smaller eta");
      }
      u[i] = a[i].mass / kv;
    }
    for (std::size_t j = 0; j < n; ++j) {
      double ku = 0.0;
      for (std::size_t i = 0; i < m; ++i) ku += kernel[i * n + j] * u[i];
      if (!(ku > 0.0) || !std::isfinite(ku)) {
        throw ComputeError("Sinkhorn kernel column underflowed; use a smaller eta");
      }
      v[j] = b[j].mass / ku;
    }
  }
  r.plan.resize(m * n);
  std::vector<double> rows(m, 0.0);
  std::vector<double> cols(n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double t = u[i] * kernel[i * n + j] * v[j];
      r.plan[i * n + j] = t;
      r.value += t * c[i * n + j];
      rows[i] += t;
      cols[j] += t;
    }
  }
  for (std::size_t i = 0; i < m; ++i) r.row_residual += std::abs(rows[i] - a[i].mass);
  for (std::size_t j = 0; j < n; ++j) r.col_residual += std::abs(cols[j] - b[j].mass);
  return r;
}

inline Estimate sinkhorn_estimate(const GroundSet& ground, const Distribution& mu, const Distribution& nu,
                                  SinkhornParams params, Metric metric = Metric::euclidean) {
  return {sinkhorn_plan(ground, mu, nu, params, metric).value, Direction::lower_is_closer};
}

}  // namespace w1
