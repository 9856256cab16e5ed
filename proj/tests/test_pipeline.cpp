#include <gtest/gtest.h>

#include "oracles.hpp"
#include "w1/pipeline.hpp"
#include "w1/synth.hpp"

using namespace w1;
namespace wt = w1::testing;

namespace {

struct Fixture {
  Benchmark bench;
  QuadtreeIndex index;
  std::unique_ptr<Searcher> searcher;
  std::vector<std::uint32_t> truth;

  explicit Fixture(std::uint64_t seed) {
    BenchmarkConfig cfg;
    cfg.dim = 8;
    cfg.ground_points = 600;
    cfg.topics = 6;
    cfg.dataset_size = 120;
    cfg.query_count = 40;
    cfg.support = 10;
    cfg.neighbor_pool = 16;
    cfg.seed = seed;
    bench = generate_benchmark(cfg);
    index = build_quadtree(bench.ground, seed + 1);
    searcher = std::make_unique<Searcher>(bench.ground, bench.dataset, &index);
    truth = truth_ids(compute_truth(*searcher, bench.queries.items, 4));
  }
};

const Fixture& shared() {
  static const Fixture f(17);
  return f;
}

}  // namespace

TEST(Estimators, ParseNames) {
  EXPECT_EQ(parse_estimator("Flowtree").method, Method::flowtree);
  EXPECT_EQ(parse_estimator("r-wmd").method, Method::rwmd);
  EXPECT_EQ(parse_estimator("exact-w1").method, Method::exact);
  auto s = parse_estimator("sinkhorn-3");
  EXPECT_EQ(s.method, Method::sinkhorn);
  EXPECT_EQ(s.sinkhorn.iterations, 3);
  EXPECT_EQ(s.name(), "sinkhorn-3");
  EXPECT_EQ(parse_estimator("sinkhorn", {7, 10.0}).sinkhorn.iterations, 7);
  EXPECT_THROW(parse_estimator("sinkhorn-0"), InvalidArgument);
  EXPECT_THROW(parse_estimator("sinkhorn-x"), InvalidArgument);
  EXPECT_THROW(parse_estimator("act"), InvalidArgument);
  EXPECT_EQ(parse_estimator("overlap").direction(), Direction::higher_is_closer);
  EXPECT_EQ(parse_estimator("tfidf").direction(), Direction::higher_is_closer);
  EXPECT_EQ(parse_estimator("mean").direction(), Direction::lower_is_closer);
}

TEST(Ranking, QueryInDatasetRanksFirstUnderExact) {
  const auto& f = shared();
  const auto& query = f.bench.dataset[37];
  auto r = rank_candidates(*f.searcher, {Method::exact}, query);
  EXPECT_EQ(r.items[0].id, 37u);
  EXPECT_EQ(r.items[0].score, 0.0);
  EXPECT_EQ(r.size(), f.bench.dataset.size());
}

TEST(Ranking, TwoItemMeanOrderByHand) {
  auto g = GroundSet::from_points({0.0, 0.0, 4.0, 0.0, 1.0, 0.0, 10.0, 0.0}, 2);
  Dataset ds;
  ds.push_back("far", Distribution::uniform({1, 3}));   // mean (7, 0)
  ds.push_back("near", Distribution::uniform({0, 1}));  // mean (2, 0)
  Searcher s(g, ds);
  auto r = rank_candidates(s, {Method::mean}, Distribution::dirac(2));  // query at (1, 0)
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r.items[0].id, 1u);
  EXPECT_DOUBLE_EQ(r.items[0].score, 1.0);
  EXPECT_DOUBLE_EQ(r.items[1].score, 6.0);
}

TEST(Ranking, RestrictionAndTies) {
  auto g = GroundSet::from_points({0.0, 1.0, 2.0}, 1);
  Dataset ds;
  ds.push_back("a", Distribution::dirac(0));
  ds.push_back("b", Distribution::dirac(2));
  ds.push_back("c", Distribution::dirac(0));
  Searcher s(g, ds);
  auto r = rank_candidates(s, {Method::exact}, Distribution::dirac(1));
  // All three are at distance 1: ids in ascending order.
  EXPECT_EQ(r.top_ids(3), (std::vector<std::uint32_t>{0, 1, 2}));
  const std::vector<std::uint32_t> only{2};
  auto single = rank_candidates(s, {Method::exact}, Distribution::dirac(1), std::span<const std::uint32_t>(only));
  ASSERT_EQ(single.size(), 1u);
  EXPECT_EQ(single.items[0].id, 2u);
  const std::vector<std::uint32_t> none;
  EXPECT_THROW(rank_candidates(s, {Method::exact}, Distribution::dirac(1), std::span<const std::uint32_t>(none)),
               InvalidArgument);
  const std::vector<std::uint32_t> bad{5};
  EXPECT_THROW(rank_candidates(s, {Method::exact}, Distribution::dirac(1), std::span<const std::uint32_t>(bad)),
               InvalidArgument);
  EXPECT_THROW(rank_candidates(s, {Method::flowtree}, Distribution::dirac(1)), InvalidArgument);
}

TEST(Ranking, NegatedScoresGiveSameOrder) {
  const auto& f = shared();
  for (Method m : {Method::overlap, Method::tfidf}) {
    for (std::size_t q = 0; q < 10; ++q) {
      auto r = rank_candidates(*f.searcher, {m}, f.bench.queries[q]);
      Ranking neg = r;
      neg.direction = Direction::lower_is_closer;
      for (auto& it : neg.items) it.score = -it.score;
      std::reverse(neg.items.begin(), neg.items.end());
      sort_ranking(neg);
      for (std::size_t i = 0; i < r.size(); ++i) EXPECT_EQ(neg.items[i].id, r.items[i].id);
    }
  }
}

TEST(Truth, ExactNearestMatchesFullScan) {
  const auto& f = shared();
  for (std::size_t q = 0; q < f.bench.queries.size(); ++q) {
    auto r = rank_candidates(*f.searcher, {Method::exact}, f.bench.queries[q]);
    EXPECT_EQ(f.truth[q], r.items[0].id) << "query " << q;
  }
}

TEST(Recall, IdentityAndReversal) {
  const auto& f = shared();
  std::vector<Ranking> exact = rank_all(*f.searcher, {Method::exact}, f.bench.queries.items, 4);
  EXPECT_EQ(recall_at_m(f.truth, exact, 1), 1.0);
  std::vector<Ranking> reversed = exact;
  for (auto& r : reversed) std::reverse(r.items.begin(), r.items.end());
  EXPECT_EQ(recall_at_m(f.truth, reversed, 1), 0.0);
  // m beyond n clamps.
  EXPECT_EQ(recall_at_m(f.truth, reversed, 100000), 1.0);
  EXPECT_THROW(recall_hit(0, std::vector<std::uint32_t>{0}, 0), InvalidArgument);
}

TEST(Recall, NonDecreasingInM) {
  const auto& f = shared();
  for (const char* name : {"mean", "overlap", "tfidf", "quadtree", "flowtree", "rwmd", "sinkhorn-1"}) {
    auto rankings = rank_all(*f.searcher, parse_estimator(name), f.bench.queries.items, 4);
    double prev = 0.0;
    for (std::size_t m = 1; m <= 40; ++m) {
      const double r = recall_at_m(f.truth, rankings, m);
      EXPECT_GE(r, prev) << name << " m=" << m;
      EXPECT_LE(r, 1.0);
      prev = r;
    }
  }
}

TEST(PipelineShape, Validation) {
  Pipeline four_stage{{{{Method::quadtree}, 424}, {{Method::flowtree}, 10}, {parse_estimator("sinkhorn-3"), 3},
                       {{Method::exact}, 1}}};
  EXPECT_NO_THROW(four_stage.validate());
  EXPECT_EQ(four_stage.final_k(), 1u);
  EXPECT_EQ(four_stage.describe(), "quadtree, flowtree, sinkhorn-3, exact & 424, 10, 3, 1");
  EXPECT_THROW(Pipeline{}.validate(), InvalidArgument);
  Pipeline flat{{{{Method::quadtree}, 10}, {{Method::flowtree}, 10}, {{Method::exact}, 1}}};
  EXPECT_THROW(flat.validate(), InvalidArgument);
  Pipeline short_prefix{{{{Method::quadtree}, 3}, {{Method::exact}, 5}}};
  EXPECT_THROW(short_prefix.validate(), InvalidArgument);
  Pipeline zero{{{{Method::exact}, 0}}};
  EXPECT_THROW(zero.validate(), InvalidArgument);
}

TEST(PipelineShape, SpliceFlowtree) {
  Pipeline p{{{{Method::quadtree}, 200}, {parse_estimator("sinkhorn-1"), 3}, {{Method::exact}, 1}}};
  auto spliced = splice_flowtree(p, 1);
  ASSERT_EQ(spliced.stages.size(), 4u);
  EXPECT_EQ(spliced.stages[1].estimator.method, Method::flowtree);
  EXPECT_EQ(spliced.stages[1].count, 10u);
  Pipeline wide{{{{Method::quadtree}, 200}, {{Method::rwmd}, 20}, {{Method::exact}, 1}}};
  EXPECT_EQ(splice_flowtree(wide, 1).stages[1].count, 40u);
  EXPECT_THROW(splice_flowtree(p, 0), InvalidArgument);
}

TEST(RunPipeline, SingleStageEqualsTruncatedRanking) {
  const auto& f = shared();
  Pipeline p{{{{Method::flowtree}, 5}}};
  auto report = run_pipeline(p, *f.searcher, f.bench.queries.items, f.truth);
  auto rankings = rank_all(*f.searcher, {Method::flowtree}, f.bench.queries.items);
  for (std::size_t q = 0; q < rankings.size(); ++q) EXPECT_EQ(report.results[q], rankings[q].top_ids(5));
  for (std::size_t m = 1; m <= 5; ++m) EXPECT_DOUBLE_EQ(report.recall_at.at(m), recall_at_m(f.truth, rankings, m));
  EXPECT_EQ(report.stages[0].evaluations, f.bench.queries.size() * f.bench.dataset.size());
}

TEST(RunPipeline, ExactFinalStageFindsSurvivingTruth) {
  const auto& f = shared();
  Pipeline p{{{{Method::quadtree}, 30}, {{Method::exact}, 1}}};
  RunOptions opts;
  opts.keep_traces = true;
  auto report = run_pipeline(p, *f.searcher, f.bench.queries.items, f.truth, opts);
  for (std::size_t q = 0; q < f.truth.size(); ++q) {
    const auto& first = report.traces[q][0];
    const bool survived = std::find(first.begin(), first.end(), f.truth[q]) != first.end();
    if (survived) {
      EXPECT_EQ(report.results[q][0], f.truth[q]);
    }
    EXPECT_EQ(report.traces[q][0].size(), 30u);
  }
  EXPECT_EQ(report.stages[1].evaluations, 30u * f.truth.size());
}

TEST(RunPipeline, AppendingExactNeverLowersRecall) {
  const auto& f = shared();
  for (std::size_t c : {1u, 3u, 8u}) {
    Pipeline base{{{{Method::mean}, 40}, {{Method::quadtree}, c}}};
    Pipeline extended{{{{Method::mean}, 40}, {{Method::quadtree}, c}, {{Method::exact}, c}}};
    auto a = run_pipeline(base, *f.searcher, f.bench.queries.items, f.truth);
    auto b = run_pipeline(extended, *f.searcher, f.bench.queries.items, f.truth);
    EXPECT_GE(b.recall_at.at(c), a.recall_at.at(c));
    EXPECT_GE(b.recall_at.at(1), a.recall_at.at(1));
  }
}

TEST(RunPipeline, ThreadCountDoesNotChangeResults) {
  const auto& f = shared();
  Pipeline p{{{{Method::quadtree}, 40}, {{Method::flowtree}, 10}, {{Method::exact}, 3}}};
  RunOptions one{1, true};
  RunOptions many{4, true};
  auto a = run_pipeline(p, *f.searcher, f.bench.queries.items, f.truth, one);
  auto b = run_pipeline(p, *f.searcher, f.bench.queries.items, f.truth, many);
  EXPECT_EQ(a.results, b.results);
  EXPECT_EQ(a.traces, b.traces);
  EXPECT_EQ(a.recall_at, b.recall_at);
  const auto j = a.to_json();
  EXPECT_EQ(j["stages"].size(), 3u);
  EXPECT_TRUE(j.contains("recall_at"));
  double prev = 0.0;
  for (const auto& [m, r] : a.recall_at) {
    EXPECT_GE(r, prev);
    prev = r;
  }
}

TEST(RunPipeline, StageErrorsNameTheStage) {
  auto g = GroundSet::from_points({0.0, 1.0}, 1);
  Dataset ds;
  ds.push_back("a", Distribution::dirac(0));
  Searcher s(g, ds);  // no quadtree
  Pipeline p{{{{Method::mean}, 1}, {{Method::flowtree}, 1}}};
  const std::vector<Distribution> qs{Distribution::dirac(1)};
  try {
    run_pipeline(p, s, qs);
    FAIL();
  } catch (const ComputeError& e) {
    EXPECT_NE(std::string(e.what()).find("stage 2"), std::string::npos) << e.what();
  }
}

TEST(Tune, CountForRecall) {
  EXPECT_EQ(count_for_recall({1, 1, 2, 5, 9, 3, 1, 1, 1, 40}, 0.9), 9u);
  EXPECT_EQ(count_for_recall({1, 1, 2, 5, 9, 3, 1, 1, 1, 40}, 0.91), 40u);
  EXPECT_EQ(count_for_recall({4}, 0.5), 4u);
}

TEST(Tune, ExactOnlyIsTrivial) {
  const auto& f = shared();
  TuneRequest req{{{Method::exact}}, 1, {}, 0.9, {}};
  auto r = tune_pipeline(req, *f.searcher, f.bench.queries.items, f.truth);
  ASSERT_EQ(r.pipeline.stages.size(), 1u);
  EXPECT_EQ(r.pipeline.final_k(), 1u);
  EXPECT_EQ(r.recall, 1.0);
}

TEST(Tune, TwoStageChoosesMinimalFeasibleCount) {
  const auto& f = shared();
  TuneRequest req{{{Method::quadtree}, {Method::exact}}, 1, {}, 0.9, {}};
  auto r = tune_pipeline(req, *f.searcher, f.bench.queries.items, f.truth);
  ASSERT_EQ(r.pipeline.stages.size(), 2u);
  EXPECT_GE(r.recall, 0.9);
  const std::size_t chosen = r.pipeline.stages[0].count;
  // Exhaustive check over the same candidate values: every smaller one fails.
  for (std::size_t c : r.first_stage_choices) {
    Pipeline p{{{{Method::quadtree}, c}, {{Method::exact}, 1}}};
    const double recall = run_pipeline(p, *f.searcher, f.bench.queries.items, f.truth).recall_at.at(1);
    if (c < chosen) {
      EXPECT_LT(recall, 0.9);
    }
    if (c == chosen) {
      EXPECT_DOUBLE_EQ(recall, r.recall);
    }
  }
  // And the chosen count is the smallest c reaching 90% directly.
  auto rankings = rank_all(*f.searcher, {Method::quadtree}, f.bench.queries.items);
  std::size_t smallest = 1;
  while (recall_at_m(f.truth, rankings, smallest) < 0.9) ++smallest;
  EXPECT_EQ(chosen, smallest);
}

TEST(Tune, InfeasibleTargetReportsBest) {
  const auto& f = shared();
  TuneRequest req{{{Method::mean}}, 1, {}, 1.0, {}};
  try {
    tune_pipeline(req, *f.searcher, f.bench.queries.items, f.truth);
    FAIL() << "mean alone should not reach recall 1";
  } catch (const ComputeError& e) {
    EXPECT_NE(std::string(e.what()).find("best"), std::string::npos);
  }
  EXPECT_THROW(tune_pipeline({{}, 1, {}, 0.9, {}}, *f.searcher, f.bench.queries.items, f.truth), InvalidArgument);
  EXPECT_THROW(tune_pipeline({{{Method::exact}}, 1, {}, 1.5, {}}, *f.searcher, f.bench.queries.items, f.truth),
               InvalidArgument);
}

TEST(Tune, ThreeStageRespectsShape) {
  const auto& f = shared();
  TuneRequest req{{{Method::quadtree}, {Method::flowtree}, {Method::exact}}, 1, {1, 2, 3, 5, 8, 12}, 0.9, {}};
  auto r = tune_pipeline(req, *f.searcher, f.bench.queries.items, f.truth);
  EXPECT_NO_THROW(r.pipeline.validate());
  EXPECT_GE(r.recall, 0.9);
  auto report = run_pipeline(r.pipeline, *f.searcher, f.bench.queries.items, f.truth);
  EXPECT_DOUBLE_EQ(report.recall_at.at(1), r.recall);
}

TEST(Spec, ParseStagesAndDefaults) {
  auto j = nlohmann::json::parse(R"({
    "sinkhorn_eta": 12,
    "stages": [{"method": "quadtree", "count": 424}, {"method": "flowtree", "count": 10},
               {"method": "sinkhorn-3", "count": 3}, {"method": "exact", "count": 1}]
  })");
  auto spec = parse_pipeline_spec(j);
  auto p = spec.pipeline();
  EXPECT_EQ(p.describe(), "quadtree, flowtree, sinkhorn-3, exact & 424, 10, 3, 1");
  EXPECT_EQ(p.stages[2].estimator.sinkhorn.eta, 12.0);
  EXPECT_EQ(spec.final_k, 1u);

  auto free_counts = parse_pipeline_spec(nlohmann::json::parse(R"({"stages": ["quadtree", "exact"], "final_k": 5})"));
  EXPECT_FALSE(free_counts.has_counts());
  EXPECT_THROW(free_counts.pipeline(), InvalidArgument);
  auto req = free_counts.tune_request(0.9);
  EXPECT_EQ(req.final_k, 5u);
  EXPECT_EQ(req.lattice.front(), 5u);
  EXPECT_EQ(req.lattice.back(), 64u);

  EXPECT_THROW(parse_pipeline_spec(nlohmann::json::parse(R"({"stages": []})")), ParseError);
  EXPECT_THROW(parse_pipeline_spec(nlohmann::json::parse(R"({"stages": ["nope"]})")), ParseError);
  EXPECT_THROW(parse_pipeline_spec(nlohmann::json::parse(R"({"stages": [{"method": "exact", "count": 2}],
                                                             "final_k": 1})")),
               ParseError);
  EXPECT_THROW(parse_pipeline_spec(nlohmann::json::parse(R"({"stages": [{"method": "exact", "count": -2}]})")),
               ParseError);
}

TEST(Spec, LoadFromFileWithComments) {
  wt::TempDir dir;
  auto path = dir.file("p.json", "// two stages\n{\"stages\": [{\"method\": \"mean\", \"count\": 9}, "
                                 "{\"method\": \"exact\", \"count\": 1}]}\n");
  EXPECT_EQ(load_pipeline_spec(path).pipeline().describe(), "mean, exact & 9, 1");
  EXPECT_THROW(load_pipeline_spec(dir.path / "none.json"), ParseError);
  EXPECT_THROW(load_pipeline_spec(dir.file("bad.json", "{")), ParseError);
  EXPECT_EQ(to_json(load_pipeline_spec(path).pipeline())["final_k"], 1);
}
