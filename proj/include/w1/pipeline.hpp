#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "w1/error.hpp"
#include "w1/parallel.hpp"
#include "w1/search.hpp"

namespace w1 {

struct Stage {
  EstimatorSpec estimator;
  std::size_t count = 0;  // candidates this stage hands on
};

/// Prefetch-and-prune pipeline. Each stage ranks the survivors of the
/// previous one and keeps its `count` best; the last stage's count is final_k.
struct Pipeline {
  std::vector<Stage> stages;

  std::size_t final_k() const noexcept { return stages.empty() ? 0 : stages.back().count; }

  void validate() const {
    if (stages.empty()) throw InvalidArgument("pipeline has no stages");
    for (std::size_t i = 0; i < stages.size(); ++i) {
      if (stages[i].count == 0) throw InvalidArgument("stage " + std::to_string(i + 1) + " keeps zero candidates");
    }
    for (std::size_t i = 0; i + 2 < stages.size(); ++i) {
      if (stages[i].count <= stages[i + 1].count) {
        throw InvalidArgument("candidate counts must strictly decrease (stage " + std::to_string(i + 1) + ": " +
                              std::to_string(stages[i].count) + ", stage " + std::to_string(i + 2) + ": " +
                              std::to_string(stages[i + 1].count) + ")");
      }
    }
    if (stages.size() >= 2 && stages[stages.size() - 2].count < final_k()) {
      throw InvalidArgument("the next-to-last stage keeps fewer candidates than final_k");
    }
  }

  std::string describe() const {
    std::string names;
    std::string counts;
    for (const auto& s : stages) {
      names += (names.empty() ? "" : ", ") + s.estimator.name();
      counts += (counts.empty() ? "" : ", ") + std::to_string(s.count);
    }
    return names + " & " + counts;
  }
};

/// Inserts a Flowtree stage in front of stage `position`, keeping
/// max(10, 2 * count of that stage) candidates.
inline Pipeline splice_flowtree(Pipeline p, std::size_t position) {
  if (position == 0 || position >= p.stages.size()) {
    throw InvalidArgument("Flowtree must be spliced between two existing stages");
  }
  const std::size_t count = std::max<std::size_t>(10, 2 * p.stages[position].count);
  p.stages.insert(p.stages.begin() + static_cast<std::ptrdiff_t>(position), Stage{{Method::flowtree}, count});
  p.validate();
  return p;
}

struct StageStats {
  std::string method;
  std::size_t count = 0;
  double seconds = 0.0;          // summed over queries, estimator calls only
  std::size_t evaluations = 0;   // distance evaluations over all queries

  double seconds_per_query(std::size_t queries) const noexcept {
    return queries == 0 ? 0.0 : seconds / static_cast<double>(queries);
  }
  double seconds_per_evaluation() const noexcept {
    return evaluations == 0 ? 0.0 : seconds / static_cast<double>(evaluations);
  }
};

struct EvalReport {
  std::string pipeline;
  std::size_t queries = 0;
  std::map<std::size_t, double> recall_at;
  std::vector<StageStats> stages;
  std::vector<std::vector<std::uint32_t>> results;  // final ids per query
  std::vector<std::vector<std::vector<std::uint32_t>>> traces;  // optional: survivors per stage

  nlohmann::json to_json(bool with_results = true) const {
    nlohmann::json j;
    j["pipeline"] = pipeline;
    j["queries"] = queries;
    nlohmann::json recall = nlohmann::json::object();
    for (const auto& [m, r] : recall_at) recall[std::to_string(m)] = r;
    j["recall_at"] = recall;
    nlohmann::json stage_list = nlohmann::json::array();
    for (const auto& s : stages) {
      stage_list.push_back({{"method", s.method},
                            {"count", s.count},
                            {"evaluations", s.evaluations},
                            {"seconds", s.seconds},
                            {"seconds_per_query", s.seconds_per_query(queries)},
                            {"seconds_per_evaluation", s.seconds_per_evaluation()}});
    }
    j["stages"] = stage_list;
    if (with_results) j["results"] = results;
    return j;
  }
};

/// 1 if `truth` is among the first m entries of `approx`. m is clamped to
/// the ranking length.
inline double recall_hit(std::uint32_t truth, std::span<const std::uint32_t> approx, std::size_t m) {
  if (m == 0) throw InvalidArgument("recall@m needs m >= 1");
  m = std::min(m, approx.size());
  return std::find(approx.begin(), approx.begin() + static_cast<std::ptrdiff_t>(m), truth) !=
                 approx.begin() + static_cast<std::ptrdiff_t>(m)
             ? 1.0
             : 0.0;
}

// Fraction of queries whose exact nearest neighbor is in the top m.
inline double recall_at_m(std::span<const std::uint32_t> truth, std::span<const Ranking> approx, std::size_t m) {
  if (truth.size() != approx.size()) throw InvalidArgument("truth and rankings differ in length");
  if (truth.empty()) return 0.0;
  double hits = 0.0;
  for (std::size_t q = 0; q < truth.size(); ++q) {
    const auto ids = approx[q].top_ids(std::min(m, approx[q].size()));
    hits += recall_hit(truth[q], ids, m);
  }
  return hits / static_cast<double>(truth.size());
}

inline std::vector<Neighbor> compute_truth(const Searcher& searcher, std::span<const Distribution> queries,
                                           unsigned threads = 1) {
  std::vector<Neighbor> out(queries.size());
  parallel_for(queries.size(), threads, [&](std::size_t q) { out[q] = exact_nearest(searcher, queries[q]); });
  return out;
}

inline std::vector<std::uint32_t> truth_ids(std::span<const Neighbor> truth) {
  std::vector<std::uint32_t> ids;
  ids.reserve(truth.size());
  for (const auto& n : truth) ids.push_back(n.id);
  return ids;
}

/// Ranks every query with one estimator (data-parallel over queries).
inline std::vector<Ranking> rank_all(const Searcher& searcher, const EstimatorSpec& spec,
                                     std::span<const Distribution> queries, unsigned threads = 1) {
  std::vector<Ranking> out(queries.size());
  parallel_for(queries.size(), threads, [&](std::size_t q) {
    out[q] = rank_candidates(searcher, spec, queries[q]);
    out[q].query = q;
  });
  return out;
}

struct RunOptions {
  unsigned threads = 1;
  bool keep_traces = false;
};

/// Runs the pipeline on every query. Recall is reported for m = 1..final_k
/// when `truth` (exact nearest-neighbor ids) is given.
inline EvalReport run_pipeline(const Pipeline& p, const Searcher& searcher, std::span<const Distribution> queries,
                               std::span<const std::uint32_t> truth = {}, RunOptions options = {}) {
  p.validate();
  if (!truth.empty() && truth.size() != queries.size()) {
    throw InvalidArgument("truth and queries differ in length");
  }
  const std::size_t stage_count = p.stages.size();
  std::vector<std::vector<double>> seconds(queries.size(), std::vector<double>(stage_count, 0.0));
  std::vector<std::vector<std::size_t>> evals(queries.size(), std::vector<std::size_t>(stage_count, 0));
  EvalReport report;
  report.pipeline = p.describe();
  report.queries = queries.size();
  report.results.resize(queries.size());
  if (options.keep_traces) report.traces.resize(queries.size());

  parallel_for(queries.size(), options.threads, [&](std::size_t q) {
    std::vector<std::uint32_t> survivors;
    for (std::size_t s = 0; s < stage_count; ++s) {
      const auto& stage = p.stages[s];
      Ranking r;
      const auto start = std::chrono::steady_clock::now();
      try {
        const auto prepared = searcher.prepare(queries[q]);
        r = s == 0 ? rank_candidates(searcher, stage.estimator, prepared)
                   : rank_candidates(searcher, stage.estimator, prepared, std::span<const std::uint32_t>(survivors));
      } catch (const std::exception& e) {
        throw ComputeError("stage " + std::to_string(s + 1) + " (" + stage.estimator.name() + "): " + e.what());
      }
      seconds[q][s] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      evals[q][s] = r.size();
      survivors = r.top_ids(stage.count);
      if (options.keep_traces) report.traces[q].push_back(survivors);
    }
    report.results[q] = std::move(survivors);
  });

  for (std::size_t s = 0; s < stage_count; ++s) {
    StageStats st{p.stages[s].estimator.name(), p.stages[s].count, 0.0, 0};
    for (std::size_t q = 0; q < queries.size(); ++q) {
      st.seconds += seconds[q][s];
      st.evaluations += evals[q][s];
    }
    report.stages.push_back(st);
  }
  if (!truth.empty() && !queries.empty()) {
    for (std::size_t m = 1; m <= p.final_k(); ++m) {
      double hits = 0.0;
      for (std::size_t q = 0; q < queries.size(); ++q) {
        if (!report.results[q].empty()) hits += recall_hit(truth[q], report.results[q], m);
      }
      report.recall_at[m] = hits / static_cast<double>(queries.size());
    }
  }
  return report;
}

/// Pipeline shape whose candidate counts are to be tuned.
struct TuneRequest {
  std::vector<EstimatorSpec> methods;
  std::size_t final_k = 1;
  // Values tried for c_2 .. c_{l-1}; c_1 comes from first-stage recall levels.
  std::vector<std::size_t> lattice;
  double target_recall = 0.9;
  // Seconds per evaluation for each stage. Measured when empty; pinning them
  // makes the choice independent of the machine.
  std::vector<double> unit_costs;
};

struct TuneResult {
  Pipeline pipeline;
  double recall = 0.0;          // recall@final_k on the tuning queries
  double estimated_seconds = 0.0;  // per query, from measured unit costs
  std::vector<std::size_t> first_stage_choices;
  std::vector<double> unit_costs;  // the costs the choice was made with
};

/// Smallest c with at least a fraction p of `ranks` (1-based) <= c.
inline std::size_t count_for_recall(std::vector<std::size_t> ranks, double p) {
  if (ranks.empty()) return 1;
  std::sort(ranks.begin(), ranks.end());
  const auto needed = static_cast<std::size_t>(std::ceil(p * static_cast<double>(ranks.size()) - 1e-9));
  return needed == 0 ? 1 : ranks[std::min(needed, ranks.size()) - 1];
}

/// Chooses candidate counts by grid search on tuning queries.
///
/// First-stage counts are the smallest values reaching first-stage recall of
/// 0.90, 0.91, ..., 0.99; later counts range over the lattice. Each
/// configuration is costed as sum over stages of (evaluations x measured
/// seconds per evaluation of that method), which keeps the choice
/// reproducible for fixed unit costs. Ties go to the smaller count vector.
inline TuneResult tune_pipeline(const TuneRequest& request, const Searcher& searcher,
                                std::span<const Distribution> queries, std::span<const std::uint32_t> truth,
                                unsigned threads = 1) {
  if (request.methods.empty()) throw InvalidArgument("pipeline has no stages");
  if (!(request.target_recall > 0.0 && request.target_recall <= 1.0)) {
    throw InvalidArgument("target recall must lie in (0, 1]");
  }
  if (request.final_k == 0) throw InvalidArgument("final_k must be positive");
  if (queries.empty() || truth.size() != queries.size()) {
    throw InvalidArgument("tuning needs queries with exact nearest-neighbor ids");
  }
  if (!request.unit_costs.empty() && request.unit_costs.size() != request.methods.size()) {
    throw InvalidArgument("need one unit cost per stage");
  }
  const std::size_t stage_count = request.methods.size();
  const std::size_t nq = queries.size();
  const std::size_t n = searcher.size();

  std::vector<PreparedQuery> prepared;
  prepared.reserve(nq);
  for (const auto& q : queries) prepared.push_back(searcher.prepare(q));

  // Stage 1 over everything.
  std::vector<Ranking> first(nq);
  std::vector<double> first_seconds(nq);
  parallel_for(nq, threads, [&](std::size_t q) {
    const auto start = std::chrono::steady_clock::now();
    first[q] = rank_candidates(searcher, request.methods[0], prepared[q]);
    first_seconds[q] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  });

  auto hit_fraction = [&](const std::vector<std::vector<std::uint32_t>>& results) {
    double hits = 0.0;
    for (std::size_t q = 0; q < nq; ++q) hits += recall_hit(truth[q], results[q], request.final_k);
    return hits / static_cast<double>(nq);
  };

  TuneResult result;
  if (stage_count == 1) {
    std::vector<std::vector<std::uint32_t>> results(nq);
    for (std::size_t q = 0; q < nq; ++q) results[q] = first[q].top_ids(request.final_k);
    result.pipeline.stages = {{request.methods[0], request.final_k}};
    result.recall = hit_fraction(results);
    double total = 0.0;
    for (double s : first_seconds) total += s;
    result.estimated_seconds = total / static_cast<double>(nq);
    if (result.recall + 1e-12 < request.target_recall) {
      throw ComputeError("no feasible configuration: best recall " + std::to_string(result.recall));
    }
    return result;
  }

  std::vector<std::size_t> ranks(nq);
  for (std::size_t q = 0; q < nq; ++q) {
    const auto& items = first[q].items;
    auto it = std::find_if(items.begin(), items.end(), [&](const RankedItem& r) { return r.id == truth[q]; });
    ranks[q] = static_cast<std::size_t>(it - items.begin()) + 1;
  }
  std::vector<std::size_t> c1_values;
  for (int pct = 90; pct <= 99; ++pct) {
    std::size_t c = count_for_recall(ranks, pct / 100.0);
    c = std::clamp(c, request.final_k, n);
    if (std::find(c1_values.begin(), c1_values.end(), c) == c1_values.end()) c1_values.push_back(c);
  }
  std::sort(c1_values.begin(), c1_values.end());
  result.first_stage_choices = c1_values;
  const std::size_t c1_max = c1_values.back();

  // Later stages: score the first c1_max survivors once per stage; any
  // configuration then reduces to sorting cached scores.
  std::vector<std::vector<std::unordered_map<std::uint32_t, double>>> cache(
      stage_count, std::vector<std::unordered_map<std::uint32_t, double>>(nq));
  std::vector<double> unit_cost(stage_count, 0.0);
  {
    double total = 0.0;
    for (double s : first_seconds) total += s;
    unit_cost[0] = total / static_cast<double>(nq * n);
  }
  for (std::size_t s = 1; s < stage_count; ++s) {
    std::vector<double> secs(nq, 0.0);
    parallel_for(nq, threads, [&](std::size_t q) {
      const auto start = std::chrono::steady_clock::now();
      for (std::uint32_t id : first[q].top_ids(c1_max)) {
        cache[s][q].emplace(id, searcher.score(request.methods[s], prepared[q], id).value);
      }
      secs[q] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    });
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t q = 0; q < nq; ++q) {
      total += secs[q];
      count += cache[s][q].size();
    }
    unit_cost[s] = count == 0 ? 0.0 : total / static_cast<double>(count);
  }
  if (!request.unit_costs.empty()) unit_cost = request.unit_costs;
  result.unit_costs = unit_cost;

  // Enumerate (c_1, c_2, ..., c_{l-1}).
  std::vector<std::size_t> lattice = request.lattice;
  std::sort(lattice.begin(), lattice.end());
  lattice.erase(std::unique(lattice.begin(), lattice.end()), lattice.end());
  std::vector<std::vector<std::size_t>> configs;
  std::vector<std::size_t> current;
  auto extend = [&](auto&& self, std::size_t depth) -> void {
    if (depth == stage_count - 1) {
      configs.push_back(current);
      return;
    }
    const std::size_t prev = current.back();
    for (std::size_t c : lattice) {
      if (c < prev && c >= request.final_k) {
        current.push_back(c);
        self(self, depth + 1);
        current.pop_back();
      }
    }
  };
  for (std::size_t c1 : c1_values) {
    current = {c1};
    extend(extend, 1);
  }
  if (configs.empty()) throw ComputeError("no candidate configuration fits the lattice");

  auto evaluate = [&](const std::vector<std::size_t>& counts) {
    std::vector<std::vector<std::uint32_t>> results(nq);
    for (std::size_t q = 0; q < nq; ++q) {
      std::vector<std::uint32_t> survivors = first[q].top_ids(counts[0]);
      for (std::size_t s = 1; s < stage_count; ++s) {
        Ranking r;
        r.direction = request.methods[s].direction();
        for (std::uint32_t id : survivors) r.items.push_back({id, cache[s][q].at(id)});
        sort_ranking(r);
        survivors = r.top_ids(s + 1 < stage_count ? counts[s] : request.final_k);
      }
      results[q] = std::move(survivors);
    }
    double cost = unit_cost[0] * static_cast<double>(n);
    for (std::size_t s = 1; s < stage_count; ++s) cost += unit_cost[s] * static_cast<double>(counts[s - 1]);
    return std::pair{hit_fraction(results), cost};
  };

  bool found = false;
  double best_recall = 0.0;
  std::vector<std::size_t> best_counts;
  for (const auto& counts : configs) {
    const auto [recall, cost] = evaluate(counts);
    best_recall = std::max(best_recall, recall);
    if (recall + 1e-12 < request.target_recall) continue;
    if (!found || cost < result.estimated_seconds ||
        (cost == result.estimated_seconds && counts < best_counts)) {
      found = true;
      best_counts = counts;
      result.recall = recall;
      result.estimated_seconds = cost;
    }
  }
  if (!found) {
    throw ComputeError("no feasible configuration reaches recall " + std::to_string(request.target_recall) +
                       "; best achieved " + std::to_string(best_recall));
  }
  for (std::size_t s = 0; s < stage_count; ++s) {
    result.pipeline.stages.push_back({request.methods[s], s + 1 < stage_count ? best_counts[s] : request.final_k});
  }
  return result;
}

// Pipeline spec file:
//   {"stages": [{"method": "quadtree", "count": 424}, ..., {"method": "exact", "count": 1}],
//    "final_k": 1, "lattice": [2, 3, 5], "sinkhorn_eta": 30}
// Counts may be omitted when the file only feeds tuning.
struct PipelineSpec {
  std::vector<EstimatorSpec> methods;
  std::vector<std::optional<std::size_t>> counts;
  std::size_t final_k = 1;
  std::vector<std::size_t> lattice;

  bool has_counts() const {
    return std::all_of(counts.begin(), counts.end(), [](const auto& c) { return c.has_value(); });
  }

  Pipeline pipeline() const {
    if (!has_counts()) throw InvalidArgument("pipeline spec is missing candidate counts");
    Pipeline p;
    for (std::size_t i = 0; i < methods.size(); ++i) p.stages.push_back({methods[i], *counts[i]});
    p.validate();
    return p;
  }

  TuneRequest tune_request(double target) const {
    std::vector<std::size_t> lattice_values = lattice;
    if (lattice_values.empty()) {
      for (std::size_t c = final_k; c <= 64; c = c < 16 ? c + 1 : c * 2) lattice_values.push_back(c);
    }
    return {methods, final_k, lattice_values, target, {}};
  }
};

inline PipelineSpec parse_pipeline_spec(const nlohmann::json& j, SinkhornParams sinkhorn_defaults = {}) {
  PipelineSpec spec;
  try {
    if (j.contains("sinkhorn_eta")) sinkhorn_defaults.eta = j.at("sinkhorn_eta").get<double>();
    if (j.contains("sinkhorn_iters")) sinkhorn_defaults.iterations = j.at("sinkhorn_iters").get<int>();
    const auto& stages = j.at("stages");
    if (!stages.is_array() || stages.empty()) throw ParseError("'stages' must be a nonempty array");
    for (const auto& s : stages) {
      const std::string name = s.is_string() ? s.get<std::string>() : s.at("method").get<std::string>();
      spec.methods.push_back(parse_estimator(name, sinkhorn_defaults));
      if (s.is_object() && s.contains("count") && !s.at("count").is_null()) {
        const auto c = s.at("count").get<long long>();
        if (c <= 0) throw ParseError("stage counts must be positive");
        spec.counts.emplace_back(static_cast<std::size_t>(c));
      } else {
        spec.counts.emplace_back(std::nullopt);
      }
    }
    if (j.contains("final_k")) {
      const auto k = j.at("final_k").get<long long>();
      if (k <= 0) throw ParseError("final_k must be positive");
      spec.final_k = static_cast<std::size_t>(k);
    } else if (spec.counts.back()) {
      spec.final_k = *spec.counts.back();
    }
    if (spec.counts.back() && *spec.counts.back() != spec.final_k) {
      throw ParseError("last stage count must equal final_k");
    }
    if (j.contains("lattice")) spec.lattice = j.at("lattice").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("pipeline spec: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("pipeline spec: ") + e.what());
  }
  return spec;
}

inline PipelineSpec load_pipeline_spec(const std::filesystem::path& path, SinkhornParams sinkhorn_defaults = {}) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return parse_pipeline_spec(j, sinkhorn_defaults);
}

inline nlohmann::json to_json(const Pipeline& p) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : p.stages) stages.push_back({{"method", s.estimator.name()}, {"count", s.count}});
  return {{"stages", stages}, {"final_k", p.final_k()}};
}

}  // namespace w1
