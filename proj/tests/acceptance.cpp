// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "ssrec/cli.hpp"
#include "ssrec/ssrec.hpp"
#include "support/hmm_oracle.hpp"
#include "support/random_instance.hpp"

using namespace ssrec;

namespace {

const std::string kFixtures = SSREC_FIXTURES;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

// 1. Pseudo-query of the worked example.
Verdict example_pseudo_query() {
  const auto t0 = std::chrono::steady_clock::now();
  auto ds = ingest_log(kFixtures + "/worked_example/interactions.jsonl", InputFormat::jsonl);
  const auto stats = stats_from_json(cli::read_json(kFixtures + "/worked_example/stats.json"), ds.vocab, 0.95);
  const auto v = cli::parse_item(kFixtures + "/worked_example/item.json", ds.vocab);
  const auto profiles = build_profiles(ds, ds.interactions, 5);
  const auto models = train_models(ds, ds.interactions, profiles, BiHmmConfig{});
  const auto ix = build_index(make_user_states(profiles, models, kDefaultFloor), ds.vocab,
                              BackgroundModel::from_dataset(ds, ds.interactions), ScoringConfig{}, IndexConfig{},
                              ds.n_categories(), 5);
  const auto q = gen_pseudo_query(ix, ScoringItem::from(v, &stats, 1), 0);
  const auto text = cli::format_pseudo_query(q, ix.vocab());
  const double secs = seconds_since(t0);
  const bool ok = text == "{0, sports, <0,1,0,0>, <1,0,2,2,0,1>, <1,0,1,0.9,0,0.7>}" && secs < 1.0;
  return {ok, text + " in " + fmt(secs, 3) + " s"};
}

// 2. knn_query against brute force over reachable users.
Verdict oracle_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  testing::Shape shape;
  shape.max_users = 500;
  shape.max_categories = 20;
  shape.max_entities = 200;
  shape.max_producers = 40;
  shape.items = 200;
  shape.interactions = 3000;
  std::size_t queries = 0, mismatches = 0;
  const std::size_t instances = 500;
  for (std::uint64_t seed = 0; seed < instances; ++seed) {
    const auto in = testing::random_instance(seed, shape);
    std::mt19937_64 rng(seed);
    for (int q = 0; q < 10; ++q) {
      const auto item = in.item(rng() % shape.items);
      for (std::size_t k : {1, 5, 10, 30}) {
        ++queries;
        if (!testing::matches_oracle(in.index, item, k)) ++mismatches;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 300,
          std::to_string(instances) + " instances, " + std::to_string(queries) + " queries, " +
              std::to_string(mismatches) + " mismatches in " + fmt(secs, 1) + " s"};
}

// 3. Every IEntry bound dominates its children and descendant leaves.
Verdict bound_properties() {
  std::size_t trees = 0, entries = 0, violations = 0, queries = 0;
  testing::Shape shape;
  shape.max_users = 300;
  shape.max_categories = 4;
  shape.items = 100;
  shape.interactions = 1500;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto in = testing::random_instance(10'000 + seed, shape);
    trees += in.index.trees().size();
    for (std::size_t i = 0; i < shape.items; ++i) {
      const auto r = testing::check_bounds(in.index, in.item(i));
      ++queries;
      entries += r.entries;
      violations += r.violations;
    }
  }
  return {violations == 0 && trees >= 100 && queries >= 100 * 100,
          std::to_string(trees) + " trees, " + std::to_string(queries) + " queries, " + std::to_string(entries) +
              " entry bounds, " + std::to_string(violations) + " violations"};
}

// 4. Forward and Viterbi against enumeration; EM monotonicity.
Verdict hmm_correctness() {
  std::size_t bad = 0;
  const std::size_t seeds = 300;
  for (std::uint64_t seed = 0; seed < seeds; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t N = 1 + rng() % 4, M = 1 + rng() % 5, T = 1 + rng() % 8;
    const auto p = detail::random_init(N, M, seed * 31 + 7, kDefaultFloor);
    const auto seq = testing::random_seq(rng, T, M);
    const auto oracle = testing::enumerate_paths(p, seq);
    const auto v = viterbi(p, seq);
    if (std::abs(forward_log_likelihood(p, seq) - std::log(oracle.likelihood)) > 1e-9) ++bad;
    if (std::abs(v.log_prob - oracle.best_log) > 1e-9) ++bad;
    if (std::abs(testing::path_log(p, seq, v.path) - oracle.best_log) > 1e-9) ++bad;
    if (oracle.best_log - oracle.runner_up > 1e-9 && v.path != oracle.best_path) ++bad;
  }
  std::size_t runs = 0, drops = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t N = 1 + rng() % 5, M = 2 + rng() % 6;
    std::vector<ObsSeq> seqs;
    for (std::size_t i = 0; i < 1 + rng() % 3; ++i) seqs.push_back(testing::random_seq(rng, 5 + rng() % 40, M));
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.tolerance = 1e-300;
    cfg.max_iterations = 40;
    const auto r = baum_welch(seqs, N, M, cfg);
    ++runs;
    for (std::size_t i = 1; i < r.history.size(); ++i)
      if (r.history[i] < r.history[i - 1] - 1e-9) ++drops;
  }
  return {bad == 0 && drops == 0, std::to_string(seeds) + " enumerated instances, " + std::to_string(bad) +
                                      " mismatches; " + std::to_string(runs) + " EM runs, " + std::to_string(drops) +
                                      " likelihood drops"};
}

// 5. One producer state reduces the BiHMM to the plain HMM.
Verdict bihmm_reduction() {
  std::size_t bad = 0;
  double worst = 0;
  const std::size_t histories = 100;
  for (std::uint64_t seed = 0; seed < histories; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t Nb = 1 + rng() % 4, C = 2 + rng() % 6, T = 8 + rng() % 40;
    AnnotatedHistory h;
    h.producer_states = 1;
    for (std::size_t t = 0; t < T; ++t) h.obs.push_back({CategoryId(static_cast<std::uint32_t>(rng() % C)), 0});
    TrainConfig cfg;
    cfg.seed = seed;
    const auto model = train_consumer_model(ConsumerId(0), h, Nb, C, cfg);
    const auto seq = detail::categories_of(h.obs);
    const auto plain = baum_welch(seq, Nb, C, cfg).params;
    const auto bi = predict_category_prob(model, h.obs);
    const auto hmm = predict_next_obs(plain, seq);
    for (std::size_t c = 0; c < C; ++c) {
      worst = std::max(worst, std::abs(bi[c] - hmm[c]));
      if (std::abs(bi[c] - hmm[c]) > 1e-9) ++bad;
    }
  }
  std::ostringstream w;
  w << std::scientific << worst;
  return {bad == 0, std::to_string(histories) + " histories, max difference " + w.str()};
}

// 6. Planted producer gating: BiHMM beats HMM on next-category accuracy.
Verdict planted_gating() {
  double hmm = 0, bihmm = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SyntheticSpec s;
    s.seed = seed;
    s.consumers = 200;
    s.steps = 100;
    const auto ds = synthetic_dataset(generate_synthetic(s));
    BiHmmConfig bc;
    bc.producer_states = 2;
    bc.train.seed = seed;
    const auto rep = prediction_accuracy(ds, bc);
    hmm += rep.hmm_mean / 5;
    bihmm += rep.bihmm_mean / 5;
  }
  return {bihmm - hmm >= 0.02, "HMM " + fmt(hmm) + ", BiHMM " + fmt(bihmm) + ", margin " + fmt(bihmm - hmm)};
}

// 7. Entity expansion helps P@10 on planted co-occurrence.
Verdict expansion_gain() {
  double on = 0, off = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SyntheticSpec s;
    s.seed = seed;
    s.consumers = 200;
    s.steps = 40;
    s.producers = 20;
    s.items_per_step = 2;
    const auto ds = synthetic_dataset(generate_synthetic(s));
    RunConfig cfg;
    cfg.seed = seed;
    cfg.bihmm.producer_states = 2;
    cfg.bihmm.consumer_states = 2;
    cfg.harness.k = {10};
    on += run_stream_simulation(ds, cfg, true).pooled[0].p_at_k() / 5;
    off += run_stream_simulation(ds, cfg, false).pooled[0].p_at_k() / 5;
  }
  return {on >= off, "P@10 with expansion " + fmt(on) + ", without " + fmt(off)};
}

// 8. Incremental maintenance equals a rebuild.
Verdict maintenance() {
  std::size_t batches = 0, compared = 0, mismatches = 0, broken = 0;
  testing::Shape shape;
  shape.max_users = 150;
  shape.interactions = 1200;
  shape.train_fraction = 0.5;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto in = testing::random_instance(20'000 + seed, shape);
    std::mt19937_64 rng(seed);
    const std::span<const UpdateEvent> all(in.updates);
    for (std::size_t at = 0; at < all.size() && at < 5 * 60; at += 60) {
      in.index.apply_updates(all.subspan(at, std::min<std::size_t>(60, all.size() - at)), in.models);
      ++batches;
      try {
        in.index.verify();
      } catch (const IntegrityError&) {
        ++broken;
      }
      const auto members = in.index.block_members();
      const auto rebuilt = build_index(in.index.states(), in.index.vocab(), in.index.background(), in.index.scoring(),
                                       in.index.config(), in.index.n_categories(), in.index.window_capacity(), &members);
      for (int q = 0; q < 20; ++q) {
        const auto item = in.item(rng() % shape.items);
        ++compared;
        if (in.index.knn_query(item, 10) != rebuilt.knn_query(item, 10)) ++mismatches;
      }
    }
  }
  return {batches >= 50 && mismatches == 0 && broken == 0,
          std::to_string(batches) + " batches, " + std::to_string(compared) + " queries, " +
              std::to_string(mismatches) + " mismatches, " + std::to_string(broken) + " integrity failures"};
}

// 9. knn_query at least 3x faster than brute force on 50,000 users.
Verdict efficiency() {
  const auto t0 = std::chrono::steady_clock::now();
  SyntheticSpec s;
  s.seed = 7;
  s.consumers = 50'000;
  s.categories = 20;
  s.home_categories = 3;
  s.steps = 15;
  s.producers = 200;
  s.items_per_step = 2;
  const auto ds = synthetic_dataset(generate_synthetic(s));
  RunConfig cfg;
  cfg.bihmm.producer_states = 2;
  cfg.bihmm.consumer_states = 2;
  const auto rep = bench_dataset(ds, cfg, 200, 30);
  const double secs = seconds_since(t0);
  return {rep.users >= 50'000 && rep.speedup >= 3.0 && rep.mismatches == 0 && secs < 600,
          std::to_string(rep.users) + " users, knn " + fmt(rep.knn.mean_us, 1) + " us, brute force " +
              fmt(rep.brute.mean_us, 1) + " us, speedup " + fmt(rep.speedup, 2) + ", " + fmt(secs, 1) + " s"};
}

// 10. simulate twice gives byte-identical JSON.
Verdict determinism() {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "ssrec_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto run = [](std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(std::move(args), out, err);
    return std::make_pair(code, out.str());
  };
  const auto d = dir.string();
  run({"--seed", "5", "synth", "--out", d, "--consumers", "60", "--producers", "10", "--steps", "20"});
  auto sim = [&](const std::string& out) {
    return run({"--json", "--seed", "5", "simulate", "--input", d + "/interactions.jsonl", "--items",
                d + "/items.jsonl", "--out", out});
  };
  const auto a = sim(d + "/a.json");
  const auto b = sim(d + "/b.json");
  const bool same = a.first == 0 && b.first == 0 && a.second == b.second &&
                    cli::read_text(d + "/a.json") == cli::read_text(d + "/b.json") && !a.second.empty();
  fs::remove_all(dir);
  return {same, std::to_string(a.second.size()) + " bytes, identical: " + (same ? "yes" : "no")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"example pseudo-query", example_pseudo_query},
      {"oracle equivalence", oracle_equivalence},
      {"bound properties", bound_properties},
      {"HMM correctness", hmm_correctness},
      {"BiHMM reduction", bihmm_reduction},
      {"planted producer gating", planted_gating},
      {"entity expansion", expansion_gain},
      {"maintenance equivalence", maintenance},
      {"desk-scale efficiency", efficiency},
      {"end-to-end determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failed;
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " (" << criteria[i].first << "): " << v.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
