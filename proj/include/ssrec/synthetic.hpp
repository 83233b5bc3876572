#ifndef SSREC_SYNTHETIC_HPP
#define SSREC_SYNTHETIC_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssrec/domain.hpp"
#include "ssrec/hmm.hpp"
#include "ssrec/types.hpp"

namespace ssrec {

/// Generative model:
///  - time advances in steps; at each step every producer moves its sticky
///    two-state chain and creates a few items whose category leans to the
///    lower (state 0) or upper (state 1) half of the category range;
///  - every consumer holds a latent z in {0, 1}, a set of home categories
///    and one target category per z value (from the matching half when the
///    home set allows); with probability gate_prob its next category is the
///    target of its current z, otherwise a uniform home category;
///  - the consumed item is drawn from recent items of that category whose
///    producer was in the consumer's fresh z at creation, so the producer
///    state of one item carries the category of the next;
///  - each category has topics: an anchor entity plus a pool of entities;
///    consumers lean to one favourite topic per category;
///  - popularity inside a candidate pool is Zipf over creation order.
struct SyntheticSpec {
  std::uint64_t seed = 42;
  std::size_t producers = 40;
  std::size_t consumers = 200;
  std::size_t categories = 4;
  std::size_t steps = 100;          // interactions per consumer
  std::size_t items_per_step = 4;   // per producer
  std::size_t pool_window = 3;      // steps an item stays on offer
  double producer_stay = 0.9;
  double producer_skew = 0.9;       // mass on the state's own half
  double consumer_stay = 0.5;
  double gate_prob = 0.9;
  std::size_t home_categories = 0;  // per consumer; 0 = all
  std::size_t topics_per_category = 4;
  std::size_t topic_entities = 20;
  std::size_t entities_per_item = 2;
  double anchor_prob = 0.5;
  double topic_affinity = 0.7;
  double zipf = 1.0;
  std::int64_t start_ts = 1'600'000'000;

  void validate() const {
    if (categories == 0) throw ConfigError("synthetic: categories must be >= 1");
    if (producers == 0) throw ConfigError("synthetic: producers must be >= 1");
    if (items_per_step == 0 || pool_window == 0) throw ConfigError("synthetic: items_per_step and pool_window must be >= 1");
    if (topics_per_category == 0 || topic_entities == 0) throw ConfigError("synthetic: topics need entities");
    if (home_categories > categories) throw ConfigError("synthetic: home_categories exceeds categories");
    for (double p : {producer_stay, producer_skew, consumer_stay, gate_prob, anchor_prob, topic_affinity})
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("synthetic: probabilities must be in [0, 1]");
    if (!(zipf >= 0.0)) throw ConfigError("synthetic: zipf exponent must be >= 0");
    if (start_ts < 0) throw ConfigError("synthetic: start timestamp must be >= 0");
  }
};

struct SyntheticItem {
  std::string item;
  std::int64_t ts = 0;
  std::string category;
  std::string producer;
  std::vector<std::string> entities;
  std::uint32_t state = 0;  // producer state at creation
};

struct SyntheticData {
  std::vector<SyntheticItem> items;
  std::vector<LogRow> interactions;  // timestamp order
  std::vector<std::uint32_t> consumer_z;  // latent z per interaction
};

namespace detail {

inline std::size_t pick_index(std::mt19937_64& rng, std::size_t n) {
  const auto i = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
  return std::min(i, n - 1);
}

inline std::size_t pick_weighted(std::mt19937_64& rng, const std::vector<double>& w) {
  double total = 0;
  for (double x : w) total += x;
  double u = uniform01(rng) * total;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (u < w[i]) return i;
    u -= w[i];
  }
  return w.size() - 1;
}

inline std::string entity_name(std::size_t c, std::size_t topic, std::size_t j) {
  return "e" + std::to_string(c) + "_" + std::to_string(topic) + "_" + std::to_string(j);
}

}  // namespace detail

inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const std::size_t C = spec.categories;
  const std::size_t lower = (C + 1) / 2;
  SyntheticData out;

  // Emission weights of the two producer states.
  std::vector<std::vector<double>> emit(2, std::vector<double>(C, 1.0));
  if (C > 1) {
    const std::size_t upper = C - lower;
    for (std::size_t c = 0; c < C; ++c) {
      const bool low = c < lower;
      emit[0][c] = low ? spec.producer_skew / static_cast<double>(lower)
                       : (1.0 - spec.producer_skew) / static_cast<double>(upper);
      emit[1][c] = low ? (1.0 - spec.producer_skew) / static_cast<double>(lower)
                       : spec.producer_skew / static_cast<double>(upper);
    }
  }

  struct Consumer {
    std::vector<std::size_t> home;
    std::vector<std::size_t> topic;  // favourite topic per category
    std::size_t target[2] = {0, 0};
    std::uint32_t z = 0;
    std::size_t pos = 0;
  };
  std::vector<Consumer> consumers(spec.consumers);
  for (auto& u : consumers) {
    std::vector<std::size_t> all(C);
    for (std::size_t c = 0; c < C; ++c) all[c] = c;
    const std::size_t h = spec.home_categories ? spec.home_categories : C;
    if (h < C) {
      for (std::size_t i = 0; i < h; ++i) std::swap(all[i], all[i + detail::pick_index(rng, C - i)]);
      all.resize(h);
    }
    u.home = all;
    u.topic.resize(C);
    for (auto& t : u.topic) t = detail::pick_index(rng, spec.topics_per_category);
    for (std::uint32_t zz = 0; zz < 2; ++zz) {
      std::vector<std::size_t> half;
      for (auto c : u.home)
        if ((c < lower) == (zz == 0)) half.push_back(c);
      const auto& from = half.empty() ? u.home : half;
      u.target[zz] = from[detail::pick_index(rng, from.size())];
    }
    u.z = static_cast<std::uint32_t>(detail::pick_index(rng, 2));
    u.pos = detail::pick_index(rng, u.home.size());
  }
  std::vector<std::uint32_t> pstate(spec.producers);
  for (auto& s : pstate) s = static_cast<std::uint32_t>(detail::pick_index(rng, 2));

  struct Live {
    std::size_t item;
    std::size_t step;
    std::size_t category;
    std::size_t topic;
    std::uint32_t state;
  };
  std::vector<Live> live;
  std::vector<std::size_t> item_topic;
  auto category_of = [](const SyntheticItem& it) { return static_cast<std::size_t>(std::stoul(it.category.substr(3))); };
  const auto step_span = static_cast<std::int64_t>(spec.producers * spec.items_per_step + spec.consumers + 1);

  for (std::size_t s = 0; s < spec.steps; ++s) {
    const std::int64_t base = spec.start_ts + static_cast<std::int64_t>(s) * step_span;
    const std::size_t first_new = out.items.size();
    for (std::size_t p = 0; p < spec.producers; ++p) {
      if (s > 0 && detail::uniform01(rng) >= spec.producer_stay) pstate[p] ^= 1U;
      for (std::size_t j = 0; j < spec.items_per_step; ++j) {
        const auto c = detail::pick_weighted(rng, emit[pstate[p]]);
        const auto topic = detail::pick_index(rng, spec.topics_per_category);
        SyntheticItem it;
        it.item = "v" + std::to_string(s) + "_" + std::to_string(p) + "_" + std::to_string(j);
        it.category = "cat" + std::to_string(c);
        it.producer = "p" + std::to_string(p);
        it.state = pstate[p];
        if (detail::uniform01(rng) < spec.anchor_prob) it.entities.push_back(detail::entity_name(c, topic, 0));
        for (std::size_t k = 0; k < spec.entities_per_item; ++k)
          it.entities.push_back(detail::entity_name(c, topic, 1 + detail::pick_index(rng, spec.topic_entities)));
        for (std::size_t i = it.entities.size(); i > 1; --i)
          std::swap(it.entities[i - 1], it.entities[detail::pick_index(rng, i)]);
        out.items.push_back(std::move(it));
        item_topic.push_back(topic);
      }
    }
    // Within a step, creation follows category order, so the first step
    // interns categories in their natural order.
    std::vector<std::size_t> order(out.items.size() - first_new);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = first_new + i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return category_of(out.items[a]) < category_of(out.items[b]);
    });
    std::int64_t tick = base;
    for (auto i : order) {
      out.items[i].ts = tick++;
      live.push_back({i, s, category_of(out.items[i]), item_topic[i], out.items[i].state});
    }
    // Drop items that left the window.
    live.erase(std::remove_if(live.begin(), live.end(),
                              [&](const Live& l) { return l.step + spec.pool_window <= s; }),
               live.end());
    std::vector<std::vector<std::size_t>> by_category(C);
    for (std::size_t i = 0; i < live.size(); ++i) by_category[live[i].category].push_back(i);

    tick = base + static_cast<std::int64_t>(spec.producers * spec.items_per_step);
    for (std::size_t ui = 0; ui < consumers.size(); ++ui) {
      auto& u = consumers[ui];
      // The latent chosen at the previous step gates this move; the new one
      // picks this step's item and gates the next move.
      const std::size_t h = u.home.size();
      std::size_t c = u.home[u.pos];
      if (s > 0) {
        if (detail::uniform01(rng) < spec.gate_prob) {
          c = u.target[u.z];
        } else {
          u.pos = detail::pick_index(rng, h);
          c = u.home[u.pos];
        }
        if (detail::uniform01(rng) >= spec.consumer_stay) u.z ^= 1U;
      }
      const bool affine = detail::uniform01(rng) < spec.topic_affinity;
      std::vector<std::size_t> cand;
      auto collect = [&](bool need_state, bool need_topic) {
        cand.clear();
        for (auto i : by_category[c]) {
          const auto& l = live[i];
          if (need_state && l.state != u.z) continue;
          if (need_topic && l.topic != u.topic[c]) continue;
          cand.push_back(i);
        }
      };
      collect(true, affine);
      if (cand.empty()) collect(true, false);
      if (cand.empty()) collect(false, false);
      if (cand.empty()) {
        for (std::size_t i = 0; i < live.size(); ++i) cand.push_back(i);
      }
      std::vector<double> w(cand.size());
      for (std::size_t r = 0; r < cand.size(); ++r) w[r] = 1.0 / std::pow(static_cast<double>(r + 1), spec.zipf);
      const auto& chosen = out.items[live[cand[detail::pick_weighted(rng, w)]].item];
      LogRow row;
      row.ts = tick++;
      row.consumer = "u" + std::to_string(ui);
      row.item = chosen.item;
      row.category = chosen.category;
      row.producer = chosen.producer;
      row.entities = chosen.entities;
      row.line = out.interactions.size() + 1;
      out.interactions.push_back(std::move(row));
      out.consumer_z.push_back(u.z);
    }
  }
  return out;
}

inline std::string item_jsonl_line(const SyntheticItem& it) {
  nlohmann::json j = {{"item", it.item},         {"ts", it.ts},
                      {"category", it.category}, {"producer", it.producer},
                      {"entities", it.entities}, {"state", it.state}};
  return j.dump();
}

/// Writes <prefix>interactions.jsonl and <prefix>items.jsonl.
inline void write_synthetic(const SyntheticData& data, const std::string& interactions_path,
                            const std::string& items_path) {
  std::ofstream log(interactions_path, std::ios::binary);
  if (!log) throw DataError("cannot open " + interactions_path + " for writing");
  for (const auto& row : data.interactions) log << to_jsonl_line(row) << '\n';
  std::ofstream items(items_path, std::ios::binary);
  if (!items) throw DataError("cannot open " + items_path + " for writing");
  for (const auto& it : data.items) items << item_jsonl_line(it) << '\n';
}

inline std::vector<LogRow> synthetic_catalog(const SyntheticData& data) {
  std::vector<LogRow> rows;
  rows.reserve(data.items.size());
  for (std::size_t i = 0; i < data.items.size(); ++i) {
    const auto& it = data.items[i];
    LogRow r;
    r.ts = it.ts;
    r.item = it.item;
    r.category = it.category;
    r.producer = it.producer;
    r.entities = it.entities;
    r.line = i + 1;
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Interaction log plus item stream as a dataset, without a round trip
/// through disk.
inline Dataset synthetic_dataset(const SyntheticData& data, bool with_catalog = true) {
  return dataset_from_rows(data.interactions, with_catalog ? synthetic_catalog(data) : std::vector<LogRow>{});
}

}  // namespace ssrec

#endif  // SSREC_SYNTHETIC_HPP
