#ifndef SSREC_CONFIG_HPP
#define SSREC_CONFIG_HPP

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssrec/bihmm.hpp"
#include "ssrec/cppse_index.hpp"
#include "ssrec/expansion.hpp"
#include "ssrec/scoring.hpp"
#include "ssrec/types.hpp"

namespace ssrec {

struct HarnessConfig {
  std::vector<std::size_t> k{5, 10, 20, 30};
  std::size_t partitions = 6;
  std::size_t train_partitions = 2;
  bool oracle = false;
  // Interactions per apply_updates batch while replaying a test partition;
  // 0 keeps the index frozen for the whole partition.
  std::size_t update_batch = 0;

  std::size_t max_k() const {
    std::size_t m = 0;
    for (auto x : k) m = std::max(m, x);
    return m;
  }

  void validate() const {
    if (k.empty()) throw ConfigError("k list must not be empty");
    for (auto x : k)
      if (x == 0) throw ConfigError("k must be >= 1");
    if (train_partitions == 0) throw ConfigError("at least one training partition is required");
    if (partitions <= train_partitions) throw ConfigError("partitions must exceed training partitions");
  }
};

/// Defaults, then config file, then flags.
struct RunConfig {
  std::uint64_t seed = 42;
  std::size_t window = 5;  // |W|
  ScoringConfig scoring;
  BiHmmConfig bihmm;
  ExpansionConfig expansion;
  IndexConfig index;
  HarnessConfig harness;

  void validate() const {
    if (window == 0) throw ConfigError("window capacity must be at least 1");
    scoring.validate();
    bihmm.validate();
    expansion.validate();
    index.validate();
    harness.validate();
  }

  /// Training config with the run seed applied.
  BiHmmConfig training() const {
    BiHmmConfig b = bihmm;
    b.train.seed = seed;
    b.train.floor = scoring.floor;
    return b;
  }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::string& where, const std::set<std::string>& known) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, v] : j.items())
    if (!known.count(key)) throw ConfigError("unknown config key " + where + "." + key);
}

template <class T>
void read_key(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key " + where + "." + key + " has the wrong type");
  }
}

}  // namespace detail

/// Overlays a JSON document onto cfg. Unknown keys are errors.
inline void apply_config_json(RunConfig& cfg, const nlohmann::json& j) {
  using detail::read_key;
  detail::reject_unknown(j, "config", {"seed", "window", "scoring", "train", "expansion", "index", "harness"});
  read_key(j, "seed", cfg.seed, "config");
  read_key(j, "window", cfg.window, "config");
  if (j.contains("scoring")) {
    const auto& s = j["scoring"];
    detail::reject_unknown(s, "scoring", {"lambda_s", "mu_producer", "mu_entity", "floor"});
    read_key(s, "lambda_s", cfg.scoring.lambda_s, "scoring");
    read_key(s, "mu_producer", cfg.scoring.mu_producer, "scoring");
    read_key(s, "mu_entity", cfg.scoring.mu_entity, "scoring");
    read_key(s, "floor", cfg.scoring.floor, "scoring");
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    detail::reject_unknown(t, "train",
                           {"max_iterations", "tolerance", "producer_states", "consumer_states", "max_states"});
    read_key(t, "max_iterations", cfg.bihmm.train.max_iterations, "train");
    read_key(t, "tolerance", cfg.bihmm.train.tolerance, "train");
    read_key(t, "producer_states", cfg.bihmm.producer_states, "train");
    read_key(t, "consumer_states", cfg.bihmm.consumer_states, "train");
    read_key(t, "max_states", cfg.bihmm.max_states, "train");
  }
  if (j.contains("expansion")) {
    const auto& e = j["expansion"];
    detail::reject_unknown(e, "expansion", {"window", "per_entity", "cap"});
    read_key(e, "window", cfg.expansion.window, "expansion");
    read_key(e, "per_entity", cfg.expansion.per_entity, "expansion");
    read_key(e, "cap", cfg.expansion.cap, "expansion");
  }
  if (j.contains("index")) {
    const auto& x = j["index"];
    detail::reject_unknown(x, "index", {"table_size", "fanout", "block_threshold", "reserve", "hash_seed",
                                        "shift_left", "shift_right"});
    read_key(x, "table_size", cfg.index.hash.table_size, "index");
    read_key(x, "fanout", cfg.index.fanout, "index");
    read_key(x, "block_threshold", cfg.index.block_threshold, "index");
    read_key(x, "reserve", cfg.index.reserve, "index");
    read_key(x, "hash_seed", cfg.index.hash.seed, "index");
    read_key(x, "shift_left", cfg.index.hash.shift_left, "index");
    read_key(x, "shift_right", cfg.index.hash.shift_right, "index");
  }
  if (j.contains("harness")) {
    const auto& h = j["harness"];
    detail::reject_unknown(h, "harness", {"k", "partitions", "train_partitions", "oracle", "update_batch"});
    read_key(h, "k", cfg.harness.k, "harness");
    read_key(h, "partitions", cfg.harness.partitions, "harness");
    read_key(h, "train_partitions", cfg.harness.train_partitions, "harness");
    read_key(h, "oracle", cfg.harness.oracle, "harness");
    read_key(h, "update_batch", cfg.harness.update_batch, "harness");
  }
}

inline void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  apply_config_json(cfg, j);
}

/// The explicit path if given, else $SSREC_CONFIG, else none.
inline std::optional<std::string> config_path(const std::string& explicit_path) {
  if (!explicit_path.empty()) return explicit_path;
  if (const char* env = std::getenv("SSREC_CONFIG"); env && *env) return std::string(env);
  return std::nullopt;
}

inline nlohmann::json config_to_json(const RunConfig& c) {
  return {
      {"seed", c.seed},
      {"window", c.window},
      {"scoring",
       {{"lambda_s", c.scoring.lambda_s},
        {"mu_producer", c.scoring.mu_producer},
        {"mu_entity", c.scoring.mu_entity},
        {"floor", c.scoring.floor}}},
      {"train",
       {{"max_iterations", c.bihmm.train.max_iterations},
        {"tolerance", c.bihmm.train.tolerance},
        {"producer_states", c.bihmm.producer_states},
        {"consumer_states", c.bihmm.consumer_states},
        {"max_states", c.bihmm.max_states}}},
      {"expansion",
       {{"window", c.expansion.window}, {"per_entity", c.expansion.per_entity}, {"cap", c.expansion.cap}}},
      {"index",
       {{"table_size", c.index.hash.table_size},
        {"fanout", c.index.fanout},
        {"block_threshold", c.index.block_threshold},
        {"reserve", c.index.reserve},
        {"hash_seed", c.index.hash.seed},
        {"shift_left", c.index.hash.shift_left},
        {"shift_right", c.index.hash.shift_right}}},
      {"harness",
       {{"k", c.harness.k},
        {"partitions", c.harness.partitions},
        {"train_partitions", c.harness.train_partitions},
        {"oracle", c.harness.oracle},
        {"update_batch", c.harness.update_batch}}},
  };
}

}  // namespace ssrec

#endif  // SSREC_CONFIG_HPP
