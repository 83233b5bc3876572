#ifndef SSREC_HARNESS_HPP
#define SSREC_HARNESS_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "ssrec/bihmm.hpp"
#include "ssrec/config.hpp"
#include "ssrec/cppse_index.hpp"
#include "ssrec/domain.hpp"
#include "ssrec/expansion.hpp"
#include "ssrec/scoring.hpp"

namespace ssrec {

inline constexpr int kReportSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Partitioning
// ---------------------------------------------------------------------------

struct Slice {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  friend bool operator==(const Slice&, const Slice&) = default;
};

struct PartitionPlan {
  std::vector<Slice> slices;
  std::size_t train_partitions = 2;

  /// 1-based numbers of the test partitions.
  std::vector<std::size_t> test_partitions() const {
    std::vector<std::size_t> out;
    for (std::size_t p = train_partitions + 1; p <= slices.size(); ++p) out.push_back(p);
    return out;
  }
};

/// Contiguous, equal-size slices; the remainder goes one extra interaction
/// each to the last slices, so sizes differ by at most 1.
inline PartitionPlan partition_stream(std::size_t n_interactions, std::size_t parts = 6,
                                      std::size_t train_partitions = 2) {
  if (parts == 0) throw ConfigError("partition count must be >= 1");
  if (train_partitions >= parts) throw ConfigError("partitions must exceed training partitions");
  PartitionPlan plan;
  plan.train_partitions = train_partitions;
  const std::size_t base = n_interactions / parts;
  const std::size_t extra = n_interactions % parts;
  std::size_t at = 0;
  for (std::size_t p = 0; p < parts; ++p) {
    const std::size_t len = base + (p >= parts - extra ? 1 : 0);
    plan.slices.push_back({at, at + len});
    at += len;
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct PrecisionRow {
  std::size_t k = 0;
  std::size_t partition = 0;  // 1-based; 0 for the pooled row
  std::size_t hits = 0;
  std::size_t items = 0;      // |V|

  double p_at_k() const {
    return items == 0 ? 0.0 : static_cast<double>(hits) / (static_cast<double>(items) * static_cast<double>(k));
  }
  friend bool operator==(const PrecisionRow&, const PrecisionRow&) = default;
};

/// One grid point of a sweep.
struct SweepPoint {
  std::string parameter;
  double value = 0;
  double lambda_s = 0;              // lambda used (best one for the window sweep)
  std::vector<PrecisionRow> pooled;
};

struct EvalReport {
  nlohmann::json config;
  std::vector<PrecisionRow> partitions;
  std::vector<PrecisionRow> pooled;
  std::vector<SweepPoint> sweep;
};

inline nlohmann::json row_json(const PrecisionRow& r) {
  nlohmann::json j = {{"k", r.k}, {"hits", r.hits}, {"items", r.items}, {"p_at_k", r.p_at_k()}};
  if (r.partition) j["partition"] = r.partition;
  return j;
}

inline nlohmann::json report_json(const EvalReport& rep) {
  nlohmann::json j;
  j["schema"] = "ssrec-eval";
  j["version"] = kReportSchemaVersion;
  j["config"] = rep.config;
  j["partitions"] = nlohmann::json::array();
  for (const auto& r : rep.partitions) j["partitions"].push_back(row_json(r));
  j["pooled"] = nlohmann::json::array();
  for (const auto& r : rep.pooled) j["pooled"].push_back(row_json(r));
  if (!rep.sweep.empty()) {
    j["sweep"] = nlohmann::json::array();
    for (const auto& s : rep.sweep) {
      nlohmann::json pj = {{"parameter", s.parameter}, {"value", s.value}, {"lambda_s", s.lambda_s}};
      pj["pooled"] = nlohmann::json::array();
      for (const auto& r : s.pooled) pj["pooled"].push_back(row_json(r));
      j["sweep"].push_back(pj);
    }
  }
  return j;
}

inline std::string format_double(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

inline std::string report_table(const EvalReport& rep) {
  std::ostringstream os;
  os << "partition  k    hits   |V|    P@k\n";
  auto line = [&](const PrecisionRow& r, const std::string& label) {
    os << std::left << std::setw(11) << label << std::setw(5) << r.k << std::setw(7) << r.hits << std::setw(7)
       << r.items << format_double(r.p_at_k()) << "\n";
  };
  for (const auto& r : rep.partitions) line(r, std::to_string(r.partition));
  for (const auto& r : rep.pooled) line(r, "pooled");
  for (const auto& s : rep.sweep) {
    for (const auto& r : s.pooled)
      os << s.parameter << "=" << format_double(s.value, 2) << " lambda_s=" << format_double(s.lambda_s, 2)
         << " k=" << r.k << " P@k=" << format_double(r.p_at_k()) << "\n";
  }
  return os.str();
}

/// CSV series, one row per sweep point and k, for external plotting.
inline std::string sweep_csv(const EvalReport& rep) {
  std::ostringstream os;
  os << "parameter,value,lambda_s,k,hits,items,p_at_k\n";
  for (const auto& s : rep.sweep)
    for (const auto& r : s.pooled)
      os << s.parameter << "," << format_double(s.value, 2) << "," << format_double(s.lambda_s, 2) << "," << r.k
         << "," << r.hits << "," << r.items << "," << format_double(r.p_at_k(), 6) << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Stream simulation
// ---------------------------------------------------------------------------

/// Everything learned from the interactions before one test partition.
struct TrainedPartition {
  std::size_t partition = 0;  // 1-based test partition
  Slice test;
  std::size_t train_end = 0;
  ModelBundle models;
  BackgroundModel bg;
  CooccurrenceStats stats;
};

inline TrainedPartition train_partition(const Dataset& ds, const PartitionPlan& plan, std::size_t partition,
                                        const RunConfig& cfg) {
  TrainedPartition tp;
  tp.partition = partition;
  tp.test = plan.slices.at(partition - 1);
  tp.train_end = tp.test.begin;
  const std::span<const Interaction> train(ds.interactions.data(), tp.train_end);
  const auto profiles = build_profiles(ds, train, cfg.window);
  tp.models = train_models(ds, train, profiles, cfg.training());
  tp.bg = BackgroundModel::from_dataset(ds, train);
  const auto seen = items_in_order(train);
  tp.stats = build_cooccurrence(seen, ds.items, cfg.expansion);
  return tp;
}

/// Hits per (lambda, k) for one test partition.
struct PartitionOutcome {
  std::vector<std::vector<std::size_t>> hits;  // [lambda][k]
  std::size_t items = 0;
};

struct SimulationOptions {
  bool expansion = true;
  std::vector<double> lambdas;  // empty: the configured lambda_s
};

inline PartitionOutcome evaluate_partition(const Dataset& ds, const TrainedPartition& tp, const RunConfig& cfg,
                                           const SimulationOptions& opt) {
  const std::vector<double> lambdas = opt.lambdas.empty() ? std::vector<double>{cfg.scoring.lambda_s} : opt.lambdas;
  const std::span<const Interaction> train(ds.interactions.data(), tp.train_end);
  const auto profiles = build_profiles(ds, train, cfg.window);
  auto index = build_index(make_user_states(profiles, tp.models, cfg.scoring.floor), ds.vocab, tp.bg, cfg.scoring,
                           cfg.index, ds.n_categories(), cfg.window);

  // Ground truth: who browsed each item inside the test partition.
  std::unordered_map<ItemIndex, std::unordered_set<std::uint32_t>> truth;
  for (std::size_t i = tp.test.begin; i < tp.test.end; ++i)
    truth[ds.interactions[i].item].insert(ds.interactions[i].consumer.value);

  PartitionOutcome out;
  out.hits.assign(lambdas.size(), std::vector<std::size_t>(cfg.harness.k.size(), 0));
  const std::size_t kmax = cfg.harness.max_k();
  std::unordered_set<ItemIndex> queried;
  std::vector<UpdateEvent> pending;

  auto query = [&](ItemIndex v) {
    const auto item = ScoringItem::from(ds.items[v], opt.expansion ? &tp.stats : nullptr, cfg.expansion.per_entity);
    const auto& who = truth.at(v);
    for (std::size_t li = 0; li < lambdas.size(); ++li) {
      std::vector<ScoredUser> top;
      if (cfg.harness.oracle) {
        ScoringConfig sc = index.scoring();
        sc.lambda_s = lambdas[li];
        top = brute_force_top_k(item, index.reachable_users(item), kmax, index.background(), sc);
      } else {
        top = index.knn_query(item, kmax, lambdas[li]);
      }
      for (std::size_t ki = 0; ki < cfg.harness.k.size(); ++ki) {
        const std::size_t k = cfg.harness.k[ki];
        for (std::size_t r = 0; r < top.size() && r < k; ++r)
          if (who.count(top[r].consumer.value)) ++out.hits[li][ki];
      }
    }
    ++out.items;
  };

  for (std::size_t i = tp.test.begin; i < tp.test.end; ++i) {
    const auto& in = ds.interactions[i];
    if (queried.insert(in.item).second) {
      if (!pending.empty()) {
        index.apply_updates(pending, tp.models);
        pending.clear();
      }
      query(in.item);
    }
    if (cfg.harness.update_batch) {
      pending.push_back({in.consumer, make_event(ds.items[in.item], in.item, in.timestamp)});
      if (pending.size() >= cfg.harness.update_batch) {
        index.apply_updates(pending, tp.models);
        pending.clear();
      }
    }
  }
  return out;
}

inline std::vector<TrainedPartition> train_partitions(const Dataset& ds, const RunConfig& cfg) {
  const auto plan = partition_stream(ds.interactions.size(), cfg.harness.partitions, cfg.harness.train_partitions);
  std::vector<TrainedPartition> out;
  for (auto p : plan.test_partitions()) out.push_back(train_partition(ds, plan, p, cfg));
  return out;
}

/// Per-partition and pooled rows for one lambda.
inline void fill_rows(const std::vector<TrainedPartition>& tps, const std::vector<PartitionOutcome>& outcomes,
                      std::size_t li, const RunConfig& cfg, std::vector<PrecisionRow>* per_partition,
                      std::vector<PrecisionRow>& pooled) {
  pooled.clear();
  for (std::size_t ki = 0; ki < cfg.harness.k.size(); ++ki) {
    PrecisionRow total{cfg.harness.k[ki], 0, 0, 0};
    for (std::size_t i = 0; i < tps.size(); ++i) {
      PrecisionRow r{cfg.harness.k[ki], tps[i].partition, outcomes[i].hits[li][ki], outcomes[i].items};
      if (per_partition) per_partition->push_back(r);
      total.hits += r.hits;
      total.items += r.items;
    }
    pooled.push_back(total);
  }
}

inline EvalReport run_stream_simulation(const Dataset& ds, const RunConfig& cfg, bool expansion = true) {
  cfg.validate();
  const auto tps = train_partitions(ds, cfg);
  std::vector<PartitionOutcome> outcomes;
  for (const auto& tp : tps) outcomes.push_back(evaluate_partition(ds, tp, cfg, {expansion, {}}));
  EvalReport rep;
  rep.config = config_to_json(cfg);
  rep.config["expansion_enabled"] = expansion;
  fill_rows(tps, outcomes, 0, cfg, &rep.partitions, rep.pooled);
  return rep;
}

enum class SweepParameter { window_size, lambda_s };

inline std::vector<double> default_lambda_grid() {
  std::vector<double> g;
  for (int i = 1; i <= 10; ++i) g.push_back(i / 10.0);
  return g;
}

inline std::vector<double> default_window_grid() {
  std::vector<double> g;
  for (int i = 1; i <= 10; ++i) g.push_back(i);
  return g;
}

/// Grid evaluation. Models are trained once per partition (they do not depend
/// on |W| or lambda_s). For the window sweep each point reports its best
/// lambda from lambda_grid (ties to the smaller lambda), judged on the
/// largest k.
inline EvalReport sweep(const Dataset& ds, const RunConfig& cfg, SweepParameter param, std::vector<double> values,
                        std::vector<double> lambda_grid = default_lambda_grid()) {
  cfg.validate();
  if (values.empty())
    values = param == SweepParameter::lambda_s ? default_lambda_grid() : default_window_grid();
  if (lambda_grid.empty()) throw ConfigError("lambda grid must not be empty");
  const auto tps = train_partitions(ds, cfg);
  EvalReport rep;
  rep.config = config_to_json(cfg);
  std::size_t kmax_i = 0;
  for (std::size_t i = 0; i < cfg.harness.k.size(); ++i)
    if (cfg.harness.k[i] > cfg.harness.k[kmax_i]) kmax_i = i;

  if (param == SweepParameter::lambda_s) {
    for (double v : values) {
      RunConfig c = cfg;
      c.scoring.lambda_s = v;
      c.validate();
    }
    std::vector<PartitionOutcome> outcomes;
    for (const auto& tp : tps) outcomes.push_back(evaluate_partition(ds, tp, cfg, {true, values}));
    for (std::size_t li = 0; li < values.size(); ++li) {
      SweepPoint pt{"lambda_s", values[li], values[li], {}};
      fill_rows(tps, outcomes, li, cfg, nullptr, pt.pooled);
      rep.sweep.push_back(pt);
    }
    return rep;
  }
  for (double v : values) {
    if (!(v >= 1) || v != std::floor(v)) throw ConfigError("window sweep values must be positive integers");
    RunConfig c = cfg;
    c.window = static_cast<std::size_t>(v);
    std::vector<PartitionOutcome> outcomes;
    for (const auto& tp : tps) outcomes.push_back(evaluate_partition(ds, tp, c, {true, lambda_grid}));
    SweepPoint best;
    bool have = false;
    for (std::size_t li = 0; li < lambda_grid.size(); ++li) {
      SweepPoint pt{"window", v, lambda_grid[li], {}};
      fill_rows(tps, outcomes, li, c, nullptr, pt.pooled);
      if (!have || pt.pooled[kmax_i].p_at_k() > best.pooled[kmax_i].p_at_k()) {
        best = pt;
        have = true;
      }
    }
    rep.sweep.push_back(best);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Next-category prediction accuracy
// ---------------------------------------------------------------------------

enum class ModelKind { hmm, bihmm };

struct UserAccuracy {
  ConsumerId consumer;
  std::size_t n_states = 1;  // chosen by the plain HMM
  double hmm = 0;
  double bihmm = 0;
};

struct AccuracyGroup {
  std::size_t n_states = 0;
  std::size_t users = 0;
  double hmm = 0;
  double bihmm = 0;
};

struct AccuracyReport {
  std::vector<UserAccuracy> users;
  std::vector<AccuracyGroup> groups;
  double hmm_mean = 0;
  double bihmm_mean = 0;

  double mean(ModelKind kind) const { return kind == ModelKind::hmm ? hmm_mean : bihmm_mean; }
};

/// Per consumer with at least min_length interactions: 80/20 temporal split,
/// rolling one-step-ahead top-1 category accuracy on the tail. The HMM picks
/// its state count with select_state_count; the BiHMM uses the same count of
/// consumer states over the composite space. Producers are trained on every
/// item in the dataset (see producer_items).
inline AccuracyReport prediction_accuracy(const Dataset& ds, const BiHmmConfig& cfg, std::size_t min_length = 5) {
  cfg.validate();
  const std::size_t C = ds.n_categories();
  const auto producers = train_producer_models(producer_items(ds, ds.interactions), ds.items, C, cfg);
  std::map<ConsumerId, std::vector<ProfileEvent>> histories;
  for (const auto& in : ds.interactions)
    histories[in.consumer].push_back(make_event(ds.items[in.item], in.item, in.timestamp));

  AccuracyReport rep;
  for (const auto& [consumer, events] : histories) {
    if (events.size() < std::max<std::size_t>(min_length, 5)) continue;
    const auto h = annotate_events(events, producers);
    const ObsSeq seq = detail::categories_of(h.obs);
    const std::size_t cut = split_point(seq.size());
    TrainConfig tc = cfg.train;
    tc.seed = consumer_seed(cfg.train.seed, consumer);
    const std::size_t n = cfg.consumer_states ? cfg.consumer_states : select_state_count(seq, C, tc, cfg.max_states);

    UserAccuracy ua;
    ua.consumer = consumer;
    ua.n_states = n;
    const ObsSeq head(seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(cut));
    ua.hmm = rolling_accuracy(baum_welch(head, n, C, tc).params, seq, cut);
    AnnotatedHistory train_h;
    train_h.obs.assign(h.obs.begin(), h.obs.begin() + static_cast<std::ptrdiff_t>(cut));
    train_h.producer_states = h.producer_states;
    const auto model = train_consumer_model(consumer, train_h, n, C, tc);
    ua.bihmm = rolling_accuracy(model, h.obs, cut);
    rep.users.push_back(ua);
  }
  std::map<std::size_t, AccuracyGroup> groups;
  for (const auto& u : rep.users) {
    auto& g = groups[u.n_states];
    g.n_states = u.n_states;
    ++g.users;
    g.hmm += u.hmm;
    g.bihmm += u.bihmm;
    rep.hmm_mean += u.hmm;
    rep.bihmm_mean += u.bihmm;
  }
  for (auto& [n, g] : groups) {
    g.hmm /= static_cast<double>(g.users);
    g.bihmm /= static_cast<double>(g.users);
    rep.groups.push_back(g);
  }
  if (!rep.users.empty()) {
    rep.hmm_mean /= static_cast<double>(rep.users.size());
    rep.bihmm_mean /= static_cast<double>(rep.users.size());
  }
  return rep;
}

inline nlohmann::json accuracy_json(const AccuracyReport& rep) {
  nlohmann::json j = {{"schema", "ssrec-accuracy"},
                      {"version", kReportSchemaVersion},
                      {"users", rep.users.size()},
                      {"hmm_mean", rep.hmm_mean},
                      {"bihmm_mean", rep.bihmm_mean}};
  j["groups"] = nlohmann::json::array();
  for (const auto& g : rep.groups)
    j["groups"].push_back({{"n_states", g.n_states}, {"users", g.users}, {"hmm", g.hmm}, {"bihmm", g.bihmm}});
  return j;
}

// ---------------------------------------------------------------------------
// Latency benchmark
// ---------------------------------------------------------------------------

struct LatencyStats {
  double mean_us = 0;
  double median_us = 0;
  double p99_us = 0;
};

struct LatencyReport {
  std::size_t items = 0;
  std::size_t users = 0;
  std::size_t k = 0;
  LatencyStats knn;
  LatencyStats brute;
  double speedup = 0;             // brute mean / knn mean
  std::size_t mismatches = 0;     // knn vs brute force over reachable users
  double mean_leaves_scored = 0;
  double mean_nodes_expanded = 0;
};

inline LatencyStats latency_stats(std::vector<double> us) {
  LatencyStats s;
  if (us.empty()) return s;
  double total = 0;
  for (double x : us) total += x;
  s.mean_us = total / static_cast<double>(us.size());
  std::sort(us.begin(), us.end());
  s.median_us = us[us.size() / 2];
  s.p99_us = us[std::min(us.size() - 1, static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(us.size()))) - 1)];
  return s;
}

/// Times knn_query against brute_force_top_k over every indexed user for the
/// same items, single-threaded. Result correctness is checked outside the
/// timed regions.
inline LatencyReport bench_latency(const CppseIndex& index, const std::vector<ScoringItem>& items, std::size_t k) {
  using clock = std::chrono::steady_clock;
  LatencyReport rep;
  rep.items = items.size();
  rep.users = index.records().size();
  rep.k = k;
  std::vector<const UserState*> all;
  all.reserve(index.records().size());
  for (const auto& r : index.records()) all.push_back(&r.state);
  std::vector<double> t_knn, t_brute;
  double leaves = 0, nodes = 0;
  for (const auto& item : items) {
    QueryStats qs;
    auto t0 = clock::now();
    const auto a = index.knn_query(item, k, &qs);
    auto t1 = clock::now();
    const auto b = brute_force_top_k(item, all, k, index.background(), index.scoring());
    auto t2 = clock::now();
    t_knn.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
    t_brute.push_back(std::chrono::duration<double, std::micro>(t2 - t1).count());
    leaves += static_cast<double>(qs.leaves_scored);
    nodes += static_cast<double>(qs.nodes_expanded);
    if (b.empty()) continue;
    if (!(a == brute_force_top_k(item, index.reachable_users(item), k, index.background(), index.scoring())))
      ++rep.mismatches;
  }
  rep.knn = latency_stats(t_knn);
  rep.brute = latency_stats(t_brute);
  rep.speedup = rep.knn.mean_us > 0 ? rep.brute.mean_us / rep.knn.mean_us : 0.0;
  if (!items.empty()) {
    rep.mean_leaves_scored = leaves / static_cast<double>(items.size());
    rep.mean_nodes_expanded = nodes / static_cast<double>(items.size());
  }
  return rep;
}

/// Trains on the first 80% of the stream, indexes every consumer seen there,
/// and benchmarks up to max_items distinct items from the remaining 20%.
inline LatencyReport bench_dataset(const Dataset& ds, const RunConfig& cfg, std::size_t max_items, std::size_t k) {
  cfg.validate();
  const std::size_t cut = split_point(ds.interactions.size());
  const std::span<const Interaction> train(ds.interactions.data(), cut);
  const auto profiles = build_profiles(ds, train, cfg.window);
  const auto models = train_models(ds, train, profiles, cfg.training());
  const auto bg = BackgroundModel::from_dataset(ds, train);
  const auto stats = build_cooccurrence(items_in_order(train), ds.items, cfg.expansion);
  const auto index = build_index(make_user_states(profiles, models, cfg.scoring.floor), ds.vocab, bg, cfg.scoring,
                                 cfg.index, ds.n_categories(), cfg.window);
  std::vector<ScoringItem> items;
  std::unordered_set<ItemIndex> seen;
  for (std::size_t i = cut; i < ds.interactions.size() && items.size() < max_items; ++i) {
    const auto v = ds.interactions[i].item;
    if (seen.insert(v).second) items.push_back(ScoringItem::from(ds.items[v], &stats, cfg.expansion.per_entity));
  }
  return bench_latency(index, items, k);
}

inline nlohmann::json latency_json(const LatencyReport& r) {
  auto stats = [](const LatencyStats& s) {
    return nlohmann::json{{"mean_us", s.mean_us}, {"median_us", s.median_us}, {"p99_us", s.p99_us}};
  };
  return {{"schema", "ssrec-bench"},
          {"version", kReportSchemaVersion},
          {"items", r.items},
          {"users", r.users},
          {"k", r.k},
          {"knn", stats(r.knn)},
          {"brute_force", stats(r.brute)},
          {"speedup", r.speedup},
          {"mismatches", r.mismatches},
          {"mean_leaves_scored", r.mean_leaves_scored},
          {"mean_nodes_expanded", r.mean_nodes_expanded}};
}

}  // namespace ssrec

#endif  // SSREC_HARNESS_HPP
