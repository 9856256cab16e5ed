// w1: command-line front end for the library.

#include <CLI11.hpp>

#include <charconv>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "w1/w1.hpp"

namespace fs = std::filesystem;
using namespace w1;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, ptr);
  if (s.find_first_of(".en") == std::string::npos) s += ".0";
  return s;
}

// FNV-1a over the canonical config text.
std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Ordered key/value record of everything that shapes an output.
struct Config {
  std::string command;
  std::vector<std::pair<std::string, std::string>> entries;

  void add(const std::string& key, const std::string& value) { entries.emplace_back(key, value); }

  std::string canonical() const {
    std::string out = command;
    for (const auto& [k, v] : entries) out += ";" + k + "=" + v;
    return out;
  }
  std::string hash() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canonical())));
    return buf;
  }
  std::string seed() const {
    for (const auto& [k, v] : entries) {
      if (k == "seed") return v;
    }
    return "none";
  }

  void write_csv_header(std::ostream& out) const {
    out << "# w1 " << kVersion << " " << command << " seed=" << seed() << " config=" << hash() << "\n";
    for (const auto& [k, v] : entries) out << "# " << k << "=" << v << "\n";
  }

  nlohmann::json json() const {
    nlohmann::json cfg = nlohmann::json::object();
    for (const auto& [k, v] : entries) cfg[k] = v;
    return {{"version", kVersion}, {"command", command}, {"seed", seed()}, {"config_hash", hash()}, {"config", cfg}};
  }
};

// Writes to a file, or stdout for "" and "-".
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_.open(path, std::ios::binary);
      if (!file_) throw ParseError("cannot write '" + path + "'");
    }
  }
  std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }
  void close(const std::string& path) {
    if (file_.is_open()) {
      file_.close();
      if (!file_) throw ParseError("write failed for '" + path + "'");
    }
  }

 private:
  std::ofstream file_;
};

struct Common {
  std::string ground;
  std::string format = "auto";
  std::string metric = "euclidean";
  std::uint64_t seed = 0;
  std::uint32_t max_depth = QuadtreeIndex::kDefaultMaxDepth;
  int threads = 0;
  int sinkhorn_iters = 1;
  double sinkhorn_eta = 30.0;
};

void add_ground(CLI::App* app, Common& c) {
  app->add_option("--ground", c.ground, "ground set file (embedding text or W1GS binary)")->required();
  app->add_option("--format", c.format, "ground file format")->check(CLI::IsMember({"auto", "text", "binary"}));
}

void add_seeded(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "random seed");
  app->add_option("--max-depth", c.max_depth, "quadtree depth cap")->check(CLI::Range(1, 62));
}

void add_threads(CLI::App* app, Common& c) {
  app->add_option("--threads", c.threads, "worker threads (default: W1_THREADS, then hardware)")
      ->check(CLI::NonNegativeNumber);
}

void add_estimator_params(CLI::App* app, Common& c) {
  app->add_option("--metric", c.metric, "ground metric")->check(CLI::IsMember({"euclidean", "l2", "l1"}));
  app->add_option("--sinkhorn-iters", c.sinkhorn_iters, "Sinkhorn iterations for bare 'sinkhorn'")
      ->check(CLI::PositiveNumber);
  app->add_option("--sinkhorn-eta", c.sinkhorn_eta, "Sinkhorn eta")->check(CLI::PositiveNumber);
}

GroundSet read_ground(const Common& c) {
  if (c.format == "text") return load_ground_set(c.ground, GroundFormat::embedding_text);
  if (c.format == "binary") return load_ground_set(c.ground, GroundFormat::binary);
  return load_ground_set(c.ground);
}

SinkhornParams sinkhorn_params(const Common& c) { return {c.sinkhorn_iters, c.sinkhorn_eta}; }

void record_common(Config& cfg, const Common& c, bool seeded, bool estimators) {
  cfg.add("ground", c.ground);
  if (seeded) {
    cfg.add("seed", std::to_string(c.seed));
    cfg.add("max_depth", std::to_string(c.max_depth));
  }
  if (estimators) {
    cfg.add("metric", std::string(to_string(parse_metric(c.metric))));
    cfg.add("sinkhorn_iters", std::to_string(c.sinkhorn_iters));
    cfg.add("sinkhorn_eta", format_double(c.sinkhorn_eta));
  }
}

// Loads --index when given, else builds a tree from --seed.
QuadtreeIndex obtain_index(const std::string& index_path, const GroundSet& ground, const Common& c) {
  if (!index_path.empty()) return load_quadtree(index_path, ground);
  return build_quadtree(ground, c.seed, c.max_depth);
}

bool needs_tree(const std::vector<EstimatorSpec>& specs) {
  return std::any_of(specs.begin(), specs.end(), [](const EstimatorSpec& s) {
    return s.method == Method::quadtree || s.method == Method::flowtree;
  });
}

void note(const std::string& text) { std::cerr << "w1: " << text << "\n"; }

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// ---- build ----------------------------------------------------------------

struct BuildArgs {
  Common common;
  std::string out;
};

void run_build(const BuildArgs& a) {
  const auto ground = read_ground(a.common);
  const auto start = std::chrono::steady_clock::now();
  const auto index = build_quadtree(ground, a.common.seed, a.common.max_depth);
  const double secs = seconds_since(start);
  save_quadtree(a.out, index);
  std::cout << "points=" << index.point_count() << " dim=" << index.dim() << " nodes=" << index.node_count()
            << " height=" << index.height() << " root_level=" << index.root_level() << " seed=" << index.seed()
            << "\n";
  note("built in " + format_double(secs) + " s");
}

// ---- query ----------------------------------------------------------------

struct QueryArgs {
  Common common;
  std::string index;
  std::string dataset;
  std::string queries;
  std::string method = "flowtree";
  std::size_t top = 10;
  std::string out;
};

void run_query(const QueryArgs& a) {
  const auto ground = read_ground(a.common);
  const auto dataset = load_distributions(a.dataset, ground);
  const auto queries = load_distributions(a.queries, ground);
  const auto spec = parse_estimator(a.method, sinkhorn_params(a.common));
  std::optional<QuadtreeIndex> index;
  if (needs_tree({spec})) index = obtain_index(a.index, ground, a.common);
  const Searcher searcher(ground, dataset, index ? &*index : nullptr, parse_metric(a.common.metric));

  const auto start = std::chrono::steady_clock::now();
  const auto rankings = rank_all(searcher, spec, queries.items, resolve_threads(a.common.threads));
  note("ranked " + std::to_string(queries.size()) + " queries in " + format_double(seconds_since(start)) + " s");

  Config cfg{"query", {}};
  record_common(cfg, a.common, true, true);
  cfg.add("index", a.index.empty() ? "built" : a.index);
  cfg.add("dataset", a.dataset);
  cfg.add("queries", a.queries);
  cfg.add("method", spec.name());
  cfg.add("top", std::to_string(a.top));
  Output out(a.out);
  auto& os = out.stream();
  cfg.write_csv_header(os);
  os << "query_id,rank,dataset_id,estimate\n";
  for (std::size_t q = 0; q < rankings.size(); ++q) {
    const auto& r = rankings[q];
    for (std::size_t i = 0; i < std::min(a.top, r.size()); ++i) {
      os << queries.ids[q] << ',' << i + 1 << ',' << dataset.ids[r.items[i].id] << ','
         << format_double(r.items[i].score) << '\n';
    }
  }
  out.close(a.out);
}

// ---- exact ----------------------------------------------------------------

struct ExactArgs {
  Common common;
  std::string a;
  std::string b;
  std::string flow;
};

// The first record of a distribution file.
Distribution first_record(const std::string& path, const GroundSet& ground) {
  return load_distributions(path, ground).items.front();
}

void run_exact(const ExactArgs& a) {
  const auto ground = read_ground(a.common);
  const auto mu = first_record(a.a, ground);
  const auto nu = first_record(a.b, ground);
  const auto r = exact_w1(ground, mu, nu, parse_metric(a.common.metric));
  std::cout << format_double(r.value) << "\n";
  if (!a.flow.empty()) {
    Config cfg{"exact", {}};
    record_common(cfg, a.common, false, false);
    cfg.add("metric", std::string(to_string(parse_metric(a.common.metric))));
    cfg.add("a", a.a);
    cfg.add("b", a.b);
    Output out(a.flow);
    auto& os = out.stream();
    cfg.write_csv_header(os);
    os << "src,dst,mass,cost\n";
    for (const auto& t : r.flow.triples) {
      os << t.src << ',' << t.dst << ',' << format_double(t.mass) << ','
         << format_double(ground.distance(t.src, t.dst, parse_metric(a.common.metric))) << '\n';
    }
    out.close(a.flow);
  }
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::string index;
  std::string dataset;
  std::string queries;
  std::vector<std::string> methods{"mean", "overlap", "tfidf", "quadtree", "flowtree", "rwmd", "sinkhorn"};
  std::vector<std::size_t> m_values{1, 2, 5, 10, 20, 50, 100};
  std::string out;
};

void run_eval(const EvalArgs& a) {
  const auto ground = read_ground(a.common);
  const auto dataset = load_distributions(a.dataset, ground);
  const auto queries = load_distributions(a.queries, ground);
  std::vector<EstimatorSpec> specs;
  for (const auto& m : a.methods) specs.push_back(parse_estimator(m, sinkhorn_params(a.common)));
  std::optional<QuadtreeIndex> index;
  if (needs_tree(specs)) index = obtain_index(a.index, ground, a.common);
  const Searcher searcher(ground, dataset, index ? &*index : nullptr, parse_metric(a.common.metric));
  const unsigned threads = resolve_threads(a.common.threads);

  auto start = std::chrono::steady_clock::now();
  const auto truth = truth_ids(compute_truth(searcher, queries.items, threads));
  note("exact nearest neighbors in " + format_double(seconds_since(start)) + " s");

  Config cfg{"eval", {}};
  record_common(cfg, a.common, true, true);
  cfg.add("index", a.index.empty() ? "built" : a.index);
  cfg.add("dataset", a.dataset);
  cfg.add("queries", a.queries);
  std::string names;
  for (const auto& s : specs) names += (names.empty() ? "" : ",") + s.name();
  cfg.add("methods", names);
  Output out(a.out);
  auto& os = out.stream();
  cfg.write_csv_header(os);
  os << "method,m,recall\n";
  for (const auto& spec : specs) {
    start = std::chrono::steady_clock::now();
    const auto rankings = rank_all(searcher, spec, queries.items, threads);
    note(spec.name() + ": " + format_double(seconds_since(start)) + " s");
    for (std::size_t m : a.m_values) os << spec.name() << ',' << m << ',' << format_double(recall_at_m(truth, rankings, m)) << '\n';
  }
  out.close(a.out);
}

// ---- pipeline / tune ------------------------------------------------------

struct PipelineArgs {
  Common common;
  std::string spec;
  std::string index;
  std::string dataset;
  std::string queries;
  std::string report;
  bool traces = false;
};

nlohmann::json report_json(const EvalReport& r, const Config& cfg, const Dataset& dataset, const Dataset& queries,
                           const std::vector<std::uint32_t>& truth) {
  auto j = r.to_json(false);
  j["header"] = cfg.json();
  nlohmann::json results = nlohmann::json::array();
  for (std::size_t q = 0; q < r.results.size(); ++q) {
    nlohmann::json ids = nlohmann::json::array();
    for (auto id : r.results[q]) ids.push_back(dataset.ids[id]);
    nlohmann::json row{{"query", queries.ids[q]}, {"results", ids}};
    if (!truth.empty()) row["nearest"] = dataset.ids[truth[q]];
    results.push_back(row);
  }
  j["results"] = results;
  return j;
}

void run_pipeline_cmd(const PipelineArgs& a) {
  const auto ground = read_ground(a.common);
  const auto dataset = load_distributions(a.dataset, ground);
  const auto queries = load_distributions(a.queries, ground);
  const auto spec = load_pipeline_spec(a.spec, sinkhorn_params(a.common));
  const auto pipeline = spec.pipeline();
  std::optional<QuadtreeIndex> index;
  if (needs_tree(spec.methods)) index = obtain_index(a.index, ground, a.common);
  const Searcher searcher(ground, dataset, index ? &*index : nullptr, parse_metric(a.common.metric));
  const unsigned threads = resolve_threads(a.common.threads);
  const auto truth = truth_ids(compute_truth(searcher, queries.items, threads));
  RunOptions opts{threads, a.traces};
  const auto report = run_pipeline(pipeline, searcher, queries.items, truth, opts);

  Config cfg{"pipeline", {}};
  record_common(cfg, a.common, true, true);
  cfg.add("spec", a.spec);
  cfg.add("pipeline", pipeline.describe());
  cfg.add("index", a.index.empty() ? "built" : a.index);
  cfg.add("dataset", a.dataset);
  cfg.add("queries", a.queries);
  auto j = report_json(report, cfg, dataset, queries, truth);
  if (a.traces) j["traces"] = report.traces;
  Output out(a.report);
  out.stream() << j.dump(2) << "\n";
  out.close(a.report);
  for (const auto& [m, r] : report.recall_at) note("recall@" + std::to_string(m) + " = " + format_double(r));
}

struct TuneArgs {
  Common common;
  std::string spec;
  std::string index;
  std::string dataset;
  std::string tuning_queries;
  std::string queries;
  double target = 0.9;
  std::vector<double> unit_costs;
  std::string out;
};

void run_tune(const TuneArgs& a) {
  const auto ground = read_ground(a.common);
  const auto dataset = load_distributions(a.dataset, ground);
  const auto tuning = load_distributions(a.tuning_queries, ground);
  const auto spec = load_pipeline_spec(a.spec, sinkhorn_params(a.common));
  std::optional<QuadtreeIndex> index;
  if (needs_tree(spec.methods)) index = obtain_index(a.index, ground, a.common);
  const Searcher searcher(ground, dataset, index ? &*index : nullptr, parse_metric(a.common.metric));
  const unsigned threads = resolve_threads(a.common.threads);
  const auto truth = truth_ids(compute_truth(searcher, tuning.items, threads));
  auto request = spec.tune_request(a.target);
  request.unit_costs = a.unit_costs;
  const auto tuned = tune_pipeline(request, searcher, tuning.items, truth, threads);

  Config cfg{"tune", {}};
  record_common(cfg, a.common, true, true);
  cfg.add("spec", a.spec);
  cfg.add("target", format_double(a.target));
  cfg.add("dataset", a.dataset);
  cfg.add("tuning_queries", a.tuning_queries);
  if (!a.queries.empty()) cfg.add("queries", a.queries);
  if (!a.unit_costs.empty()) {
    std::string costs;
    for (double c : a.unit_costs) costs += (costs.empty() ? "" : ",") + format_double(c);
    cfg.add("unit_costs", costs);
  }
  auto j = to_json(tuned.pipeline);
  j["unit_costs"] = tuned.unit_costs;
  j["header"] = cfg.json();
  j["tuning_recall"] = tuned.recall;
  j["first_stage_choices"] = tuned.first_stage_choices;
  note("tuned: " + tuned.pipeline.describe() + " (tuning recall " + format_double(tuned.recall) + ")");
  if (!a.queries.empty()) {
    const auto held_out = load_distributions(a.queries, ground);
    const auto held_truth = truth_ids(compute_truth(searcher, held_out.items, threads));
    const auto report = run_pipeline(tuned.pipeline, searcher, held_out.items, held_truth, {threads, false});
    j["evaluation"] = report_json(report, cfg, dataset, held_out, held_truth);
    for (const auto& [m, r] : report.recall_at) note("held-out recall@" + std::to_string(m) + " = " + format_double(r));
  }
  Output out(a.out);
  out.stream() << j.dump(2) << "\n";
  out.close(a.out);
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
  SweepConfig sweep;
  int threads = 0;
  std::string out;
};

void run_synth(SynthArgs a) {
  a.sweep.threads = resolve_threads(a.threads);
  const auto rows = run_model_sweep(a.sweep);
  Config cfg{"synth", {}};
  cfg.add("d", std::to_string(a.sweep.dim));
  cfg.add("s", std::to_string(a.sweep.support));
  cfg.add("eps", format_double(a.sweep.epsilon));
  std::string ns;
  for (auto n : a.sweep.N_values) ns += (ns.empty() ? "" : ",") + std::to_string(n);
  cfg.add("N", ns);
  cfg.add("trials", std::to_string(a.sweep.trials));
  cfg.add("seed", std::to_string(a.sweep.seed));
  cfg.add("max_depth", std::to_string(a.sweep.max_depth));
  Output out(a.out);
  auto& os = out.stream();
  cfg.write_csv_header(os);
  os << "N,trials,quadtree_rate,flowtree_rate\n";
  for (const auto& r : rows) {
    os << r.N << ',' << r.trials << ',' << format_double(r.quadtree_rate) << ',' << format_double(r.flowtree_rate)
       << '\n';
  }
  out.close(a.out);
}

// ---- gen ------------------------------------------------------------------

struct GenArgs {
  BenchmarkConfig bench;
  std::size_t tuning_queries = 0;
  std::string out_dir;
};

void run_gen(const GenArgs& a) {
  BenchmarkConfig cfg = a.bench;
  cfg.query_count = a.bench.query_count + a.tuning_queries;
  const auto b = generate_benchmark(cfg);
  fs::create_directories(a.out_dir);
  const fs::path dir(a.out_dir);
  save_ground_set(dir / "ground.txt", b.ground, GroundFormat::embedding_text);
  save_distributions(dir / "dataset.txt", b.dataset, b.ground);
  Dataset eval;
  Dataset tune;
  for (std::size_t i = 0; i < b.queries.size(); ++i) {
    auto& into = i < a.bench.query_count ? eval : tune;
    into.push_back(b.queries.ids[i], b.queries.items[i]);
  }
  save_distributions(dir / "queries.txt", eval, b.ground);
  if (tune.size() > 0) save_distributions(dir / "tuning.txt", tune, b.ground);
  std::cout << "wrote " << (dir / "ground.txt").string() << ", dataset.txt (" << b.dataset.size()
            << "), queries.txt (" << eval.size() << ")" << (tune.size() ? ", tuning.txt" : "") << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nearest-neighbor search under the Wasserstein-1 distance"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  BuildArgs build;
  auto* build_cmd = app.add_subcommand("build", "build a quadtree index");
  add_ground(build_cmd, build.common);
  add_seeded(build_cmd, build.common);
  build_cmd->add_option("--out", build.out, "index output file")->required();

  QueryArgs query;
  auto* query_cmd = app.add_subcommand("query", "rank a dataset for each query");
  add_ground(query_cmd, query.common);
  add_seeded(query_cmd, query.common);
  add_threads(query_cmd, query.common);
  add_estimator_params(query_cmd, query.common);
  query_cmd->add_option("--index", query.index, "quadtree index (built from --seed when absent)");
  query_cmd->add_option("--dataset", query.dataset, "dataset distributions")->required();
  query_cmd->add_option("--queries", query.queries, "query distributions")->required();
  query_cmd->add_option("--method", query.method, "estimator");
  query_cmd->add_option("--top", query.top, "rows per query")->check(CLI::PositiveNumber);
  query_cmd->add_option("--out", query.out, "CSV output (default stdout)");

  ExactArgs exact;
  auto* exact_cmd = app.add_subcommand("exact", "exact W1 between two distributions");
  add_ground(exact_cmd, exact.common);
  exact_cmd->add_option("--metric", exact.common.metric, "ground metric")
      ->check(CLI::IsMember({"euclidean", "l2", "l1"}));
  exact_cmd->add_option("--a", exact.a, "distribution file (first record is used)")->required();
  exact_cmd->add_option("--b", exact.b, "distribution file (first record is used)")->required();
  exact_cmd->add_option("--flow", exact.flow, "write the optimal flow as CSV");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "recall@m of estimators against exact nearest neighbors");
  add_ground(eval_cmd, eval.common);
  add_seeded(eval_cmd, eval.common);
  add_threads(eval_cmd, eval.common);
  add_estimator_params(eval_cmd, eval.common);
  eval_cmd->add_option("--index", eval.index, "quadtree index (built from --seed when absent)");
  eval_cmd->add_option("--dataset", eval.dataset, "dataset distributions")->required();
  eval_cmd->add_option("--queries", eval.queries, "query distributions")->required();
  eval_cmd->add_option("--methods", eval.methods, "estimators")->delimiter(',');
  eval_cmd->add_option("--m", eval.m_values, "recall cut-offs")->delimiter(',')->check(CLI::PositiveNumber);
  eval_cmd->add_option("--out", eval.out, "CSV output (default stdout)");

  PipelineArgs pipe;
  auto* pipe_cmd = app.add_subcommand("pipeline", "run a prefetch-and-prune pipeline");
  add_ground(pipe_cmd, pipe.common);
  add_seeded(pipe_cmd, pipe.common);
  add_threads(pipe_cmd, pipe.common);
  add_estimator_params(pipe_cmd, pipe.common);
  pipe_cmd->add_option("--spec", pipe.spec, "pipeline spec (JSON)")->required();
  pipe_cmd->add_option("--index", pipe.index, "quadtree index (built from --seed when absent)");
  pipe_cmd->add_option("--dataset", pipe.dataset, "dataset distributions")->required();
  pipe_cmd->add_option("--queries", pipe.queries, "query distributions")->required();
  pipe_cmd->add_option("--report", pipe.report, "JSON report (default stdout)");
  pipe_cmd->add_flag("--traces", pipe.traces, "include per-stage survivors in the report");

  TuneArgs tune;
  auto* tune_cmd = app.add_subcommand("tune", "choose pipeline candidate counts on tuning queries");
  add_ground(tune_cmd, tune.common);
  add_seeded(tune_cmd, tune.common);
  add_threads(tune_cmd, tune.common);
  add_estimator_params(tune_cmd, tune.common);
  tune_cmd->add_option("--spec", tune.spec, "pipeline spec (JSON); counts are ignored")->required();
  tune_cmd->add_option("--index", tune.index, "quadtree index (built from --seed when absent)");
  tune_cmd->add_option("--dataset", tune.dataset, "dataset distributions")->required();
  tune_cmd->add_option("--tuning-queries", tune.tuning_queries, "tuning query distributions")->required();
  tune_cmd->add_option("--queries", tune.queries, "held-out queries to evaluate the tuned pipeline on");
  tune_cmd->add_option("--target", tune.target, "target recall@final_k")->check(CLI::Range(0.0, 1.0));
  tune_cmd->add_option("--unit-costs", tune.unit_costs, "seconds per evaluation for each stage (default: measured)")
      ->delimiter(',');
  tune_cmd->add_option("--out", tune.out, "tuned pipeline JSON (default stdout)");

  SynthArgs synth;
  synth.sweep.N_values = {100, 300, 1000, 3000, 10000};
  auto* synth_cmd = app.add_subcommand("synth", "planted sphere model sweep");
  synth_cmd->add_option("--d", synth.sweep.dim, "dimension")->check(CLI::Range(2, 1 << 20));
  synth_cmd->add_option("--s", synth.sweep.support, "support size")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--eps", synth.sweep.epsilon, "perturbation radius");
  synth_cmd->add_option("--N", synth.sweep.N_values, "ground sizes")->delimiter(',');
  synth_cmd->add_option("--trials", synth.sweep.trials, "trials per N")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", synth.sweep.seed, "random seed");
  synth_cmd->add_option("--max-depth", synth.sweep.max_depth, "quadtree depth cap")->check(CLI::Range(1, 62));
  synth_cmd->add_option("--threads", synth.threads, "worker threads")->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--out", synth.out, "CSV output (default stdout)");

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "write a synthetic clustered benchmark");
  gen_cmd->add_option("--out-dir", gen.out_dir, "output directory")->required();
  gen_cmd->add_option("--seed", gen.bench.seed, "random seed");
  gen_cmd->add_option("--dim", gen.bench.dim, "dimension")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--ground-points", gen.bench.ground_points, "ground set size")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--topics", gen.bench.topics, "topic clusters")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--dataset-size", gen.bench.dataset_size, "dataset distributions")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--queries", gen.bench.query_count, "evaluation queries");
  gen_cmd->add_option("--tuning-queries", gen.tuning_queries, "extra queries written to tuning.txt");
  gen_cmd->add_option("--support", gen.bench.support, "support size")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const auto* chosen = app.get_subcommands().front();
  const std::string stage = chosen->get_name();
  try {
    if (chosen == build_cmd) run_build(build);
    else if (chosen == query_cmd) run_query(query);
    else if (chosen == exact_cmd) run_exact(exact);
    else if (chosen == eval_cmd) run_eval(eval);
    else if (chosen == pipe_cmd) run_pipeline_cmd(pipe);
    else if (chosen == tune_cmd) run_tune(tune);
    else if (chosen == synth_cmd) run_synth(synth);
    else if (chosen == gen_cmd) run_gen(gen);
  } catch (const std::exception& e) {
    std::cerr << "w1 " << stage << ": error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
