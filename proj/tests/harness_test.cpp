#include <set>

#include <gtest/gtest.h>

#include "ssrec/ssrec.hpp"

namespace ssrec {
namespace {

std::vector<std::size_t> sizes(const PartitionPlan& p) {
  std::vector<std::size_t> out;
  for (const auto& s : p.slices) out.push_back(s.size());
  return out;
}

TEST(Partition, EqualSlicesWithRemainderAtTheEnd) {
  EXPECT_EQ(sizes(partition_stream(12)), (std::vector<std::size_t>{2, 2, 2, 2, 2, 2}));
  EXPECT_EQ(sizes(partition_stream(13)), (std::vector<std::size_t>{2, 2, 2, 2, 2, 3}));
  EXPECT_EQ(sizes(partition_stream(6)), (std::vector<std::size_t>(6, 1)));
  EXPECT_EQ(sizes(partition_stream(17)), (std::vector<std::size_t>{2, 3, 3, 3, 3, 3}));
  const auto p = partition_stream(13);
  EXPECT_EQ(p.slices.back().end, 13u);
  EXPECT_EQ(p.test_partitions(), (std::vector<std::size_t>{3, 4, 5, 6}));
}

TEST(Partition, ContiguousCover) {
  for (std::size_t n = 0; n < 50; ++n) {
    const auto p = partition_stream(n, 4, 1);
    std::size_t at = 0;
    for (const auto& s : p.slices) {
      EXPECT_EQ(s.begin, at);
      at = s.end;
    }
    EXPECT_EQ(at, n);
  }
  EXPECT_THROW(partition_stream(10, 0), ConfigError);
  EXPECT_THROW(partition_stream(10, 2, 2), ConfigError);
}

TEST(PrecisionRow, HitsOverItemsTimesK) {
  EXPECT_DOUBLE_EQ((PrecisionRow{2, 0, 7, 5}).p_at_k(), 0.7);
  EXPECT_DOUBLE_EQ((PrecisionRow{10, 3, 0, 4}).p_at_k(), 0.0);
  EXPECT_DOUBLE_EQ((PrecisionRow{5, 0, 0, 0}).p_at_k(), 0.0);
}

Dataset small_dataset(std::uint64_t seed) {
  SyntheticSpec s;
  s.seed = seed;
  s.consumers = 40;
  s.producers = 8;
  s.steps = 20;
  s.items_per_step = 2;
  return synthetic_dataset(generate_synthetic(s));
}

RunConfig small_config() {
  RunConfig cfg;
  cfg.bihmm.producer_states = 2;
  cfg.bihmm.consumer_states = 2;
  cfg.bihmm.train.max_iterations = 20;
  cfg.harness.k = {1, 5, 10};
  return cfg;
}

// Frozen-index protocol written out directly.
std::vector<std::size_t> reference_hits(const Dataset& ds, const RunConfig& cfg) {
  const auto plan = partition_stream(ds.interactions.size(), cfg.harness.partitions, cfg.harness.train_partitions);
  std::vector<std::size_t> hits(cfg.harness.k.size(), 0);
  for (auto p : plan.test_partitions()) {
    const auto tp = train_partition(ds, plan, p, cfg);
    const std::span<const Interaction> train(ds.interactions.data(), tp.train_end);
    const auto profiles = build_profiles(ds, train, cfg.window);
    const auto ix = build_index(make_user_states(profiles, tp.models, cfg.scoring.floor), ds.vocab, tp.bg, cfg.scoring,
                                cfg.index, ds.n_categories(), cfg.window);
    std::set<ItemIndex> done;
    for (std::size_t i = tp.test.begin; i < tp.test.end; ++i) {
      const auto v = ds.interactions[i].item;
      if (!done.insert(v).second) continue;
      std::set<std::uint32_t> who;
      for (std::size_t j = tp.test.begin; j < tp.test.end; ++j)
        if (ds.interactions[j].item == v) who.insert(ds.interactions[j].consumer.value);
      const auto item = ScoringItem::from(ds.items[v], &tp.stats, cfg.expansion.per_entity);
      const auto top = brute_force_top_k(item, ix.reachable_users(item), cfg.harness.max_k(), tp.bg, cfg.scoring);
      for (std::size_t ki = 0; ki < cfg.harness.k.size(); ++ki)
        for (std::size_t r = 0; r < top.size() && r < cfg.harness.k[ki]; ++r) hits[ki] += who.count(top[r].consumer.value);
    }
  }
  return hits;
}

TEST(Simulation, MatchesDirectProtocol) {
  const auto ds = small_dataset(1);
  const auto cfg = small_config();
  const auto rep = run_stream_simulation(ds, cfg);
  const auto ref = reference_hits(ds, cfg);
  ASSERT_EQ(rep.pooled.size(), 3u);
  for (std::size_t ki = 0; ki < 3; ++ki) EXPECT_EQ(rep.pooled[ki].hits, ref[ki]);
  EXPECT_EQ(rep.partitions.size(), 3u * 4u);
}

TEST(Simulation, IndexAndOracleAgree) {
  const auto ds = small_dataset(2);
  for (std::size_t batch : {0u, 1u, 7u}) {
    auto cfg = small_config();
    cfg.harness.update_batch = batch;
    const auto a = run_stream_simulation(ds, cfg);
    cfg.harness.oracle = true;
    const auto b = run_stream_simulation(ds, cfg);
    EXPECT_EQ(a.pooled, b.pooled) << "batch " << batch;
    EXPECT_EQ(a.partitions, b.partitions);
  }
}

TEST(Simulation, ReportIsDeterministic) {
  const auto ds = small_dataset(3);
  const auto cfg = small_config();
  EXPECT_EQ(report_json(run_stream_simulation(ds, cfg)).dump(), report_json(run_stream_simulation(ds, cfg)).dump());
}

TEST(Simulation, PooledRowsSumPartitions) {
  const auto ds = small_dataset(4);
  const auto rep = run_stream_simulation(ds, small_config());
  for (const auto& pooled : rep.pooled) {
    std::size_t hits = 0, items = 0;
    for (const auto& r : rep.partitions)
      if (r.k == pooled.k) {
        hits += r.hits;
        items += r.items;
        EXPECT_LE(r.hits, r.items * r.k);
      }
    EXPECT_EQ(pooled.hits, hits);
    EXPECT_EQ(pooled.items, items);
  }
  const auto j = report_json(rep);
  EXPECT_EQ(j["schema"], "ssrec-eval");
  EXPECT_EQ(j["config"]["expansion_enabled"], true);
}

TEST(Sweep, LambdaPointsMatchSingleRuns) {
  const auto ds = small_dataset(5);
  const auto cfg = small_config();
  const auto rep = sweep(ds, cfg, SweepParameter::lambda_s, {0.2, 0.9});
  ASSERT_EQ(rep.sweep.size(), 2u);
  for (const auto& pt : rep.sweep) {
    EXPECT_EQ(pt.parameter, "lambda_s");
    auto c = cfg;
    c.scoring.lambda_s = pt.value;
    EXPECT_EQ(pt.pooled, run_stream_simulation(ds, c).pooled);
  }
}

TEST(Sweep, WindowPointReportsItsBestLambda) {
  const auto ds = small_dataset(6);
  const auto cfg = small_config();
  const std::vector<double> grid{0.1, 0.5, 0.9};
  const auto rep = sweep(ds, cfg, SweepParameter::window_size, {3}, grid);
  ASSERT_EQ(rep.sweep.size(), 1u);
  const auto& pt = rep.sweep[0];
  EXPECT_EQ(pt.parameter, "window");
  double best = -1;
  for (double l : grid) {
    auto c = cfg;
    c.window = 3;
    c.scoring.lambda_s = l;
    best = std::max(best, run_stream_simulation(ds, c).pooled.back().p_at_k());
  }
  EXPECT_DOUBLE_EQ(pt.pooled.back().p_at_k(), best);
  EXPECT_THROW(sweep(ds, cfg, SweepParameter::window_size, {2.5}), ConfigError);
}

TEST(Accuracy, ReportShape) {
  SyntheticSpec s;
  s.consumers = 30;
  s.steps = 30;
  s.producers = 10;
  const auto ds = synthetic_dataset(generate_synthetic(s));
  BiHmmConfig bc;
  bc.producer_states = 2;
  bc.train.max_iterations = 20;
  const auto rep = prediction_accuracy(ds, bc);
  EXPECT_EQ(rep.users.size(), 30u);
  std::size_t grouped = 0;
  for (const auto& g : rep.groups) grouped += g.users;
  EXPECT_EQ(grouped, 30u);
  for (const auto& u : rep.users) {
    EXPECT_GE(u.hmm, 0.0);
    EXPECT_LE(u.bihmm, 1.0);
  }
  EXPECT_EQ(accuracy_json(rep).dump(), accuracy_json(prediction_accuracy(ds, bc)).dump());
}

TEST(Latency, StatsAndAgreement) {
  const auto st = latency_stats({4, 1, 3, 2});
  EXPECT_DOUBLE_EQ(st.mean_us, 2.5);
  EXPECT_DOUBLE_EQ(st.median_us, 3);
  EXPECT_DOUBLE_EQ(st.p99_us, 4);
  const auto ds = small_dataset(7);
  const auto rep = bench_dataset(ds, small_config(), 20, 5);
  EXPECT_EQ(rep.mismatches, 0u);
  EXPECT_GT(rep.items, 0u);
}

}  // namespace
}  // namespace ssrec
