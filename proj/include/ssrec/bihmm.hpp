#ifndef SSREC_BIHMM_HPP
#define SSREC_BIHMM_HPP

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "ssrec/domain.hpp"
#include "ssrec/hmm.hpp"
#include "ssrec/types.hpp"

namespace ssrec {

/// splitmix64 finalizer; derives independent per-model seeds from one run seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

struct BiHmmConfig {
  TrainConfig train;
  std::size_t producer_states = 0;  // 0 = choose per producer with select_state_count
  std::size_t consumer_states = 0;  // 0 = choose per consumer with select_state_count
  std::size_t max_states = 8;

  void validate() const {
    train.validate();
    if (max_states == 0 || max_states > 64) throw ConfigError("max_states must be in [1, 64]");
    if (producer_states > 64 || consumer_states > 64) throw ConfigError("state override must be <= 64");
  }
};

// ---------------------------------------------------------------------------
// State-count selection
// ---------------------------------------------------------------------------

/// Rolling one-step-ahead top-1 accuracy of params on seq[from..), each
/// prediction conditioned on the full prefix before it.
inline double rolling_accuracy(const HmmParams& params, std::span<const std::uint32_t> seq, std::size_t from,
                               std::span<const std::uint32_t> z = {}, std::size_t groups = 1) {
  if (from >= seq.size()) return 0.0;
  if (from == 0) throw DataError("rolling accuracy needs a non-empty prefix");
  detail::ComponentTrack track;
  if (!z.empty()) track = detail::ComponentTrack{groups, z};
  const auto tr = detail::viterbi_forward(params, seq, track, false, true);
  std::size_t hits = 0;
  for (std::size_t t = from; t < seq.size(); ++t) {
    const auto dist = detail::propagate(params, tr.finals[t - 1]);
    if (argmax_symbol(dist) == seq[t]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(seq.size() - from);
}

inline std::size_t split_point(std::size_t length) { return length * 4 / 5; }

/// Picks the state count in [1, max_states] with the best rolling accuracy
/// on the last 20% after training on the first 80%. Ties go to fewer states.
inline std::size_t select_state_count(std::span<const std::uint32_t> history, std::size_t n_obs,
                                      const TrainConfig& cfg, std::size_t max_states = 8) {
  if (history.size() < 5) return 1;
  const std::size_t cut = split_point(history.size());
  const ObsSeq train(history.begin(), history.begin() + static_cast<std::ptrdiff_t>(cut));
  std::size_t best_n = 1;
  double best_acc = -1;
  for (std::size_t n = 1; n <= max_states; ++n) {
    const auto fit = baum_welch(train, n, n_obs, cfg);
    const double acc = rolling_accuracy(fit.params, history, cut);
    if (acc > best_acc) {
      best_acc = acc;
      best_n = n;
    }
  }
  return best_n;
}

// ---------------------------------------------------------------------------
// Producer layer
// ---------------------------------------------------------------------------

struct ProducerModel {
  ProducerId producer;
  HmmParams params;
  std::vector<ItemIndex> items;                // created items, temporal order
  std::vector<std::uint32_t> decoded_states;   // Viterbi state per created item
  std::vector<double> final_scores;            // Viterbi log-scores after the last item

  /// State for an item created after training: one more Viterbi step.
  std::uint32_t extrapolate(CategoryId c) const {
    if (c.value >= params.n_obs) return 0;
    const std::size_t N = params.n_states;
    std::uint32_t best = 0;
    double best_v = kNegInf;
    for (std::size_t j = 0; j < N; ++j) {
      double m = kNegInf;
      for (std::size_t i = 0; i < N; ++i) m = std::max(m, final_scores[i] + std::log(params.a(i, j)));
      const double v = m + std::log(params.b(j, c.value));
      if (v > best_v) {
        best_v = v;
        best = static_cast<std::uint32_t>(j);
      }
    }
    return best;
  }
};

struct ProducerModels {
  std::map<ProducerId, ProducerModel> models;
  std::unordered_map<ItemIndex, std::uint32_t> item_state;
  std::vector<std::string> warnings;

  std::size_t n_states(ProducerId p) const {
    auto it = models.find(p);
    return it == models.end() ? 1 : it->second.params.n_states;
  }

  /// Producer-state annotation; 0 (dummy one-state model) for unknown producers.
  std::uint32_t state_for(ItemIndex item, ProducerId producer, CategoryId category) const {
    if (auto it = item_state.find(item); it != item_state.end()) return it->second;
    auto m = models.find(producer);
    if (m == models.end()) return 0;
    return m->second.extrapolate(category);
  }
};

/// Reorders states by ascending mean emitted category so state labels mean
/// the same thing across producers.
inline HmmParams canonical_state_order(const HmmParams& p) {
  std::vector<double> mean(p.n_states, 0.0);
  for (std::size_t j = 0; j < p.n_states; ++j)
    for (std::size_t m = 0; m < p.n_obs; ++m) mean[j] += static_cast<double>(m) * p.b(j, m);
  std::vector<std::uint32_t> perm(p.n_states);
  std::iota(perm.begin(), perm.end(), 0U);
  std::stable_sort(perm.begin(), perm.end(), [&](std::uint32_t a, std::uint32_t b) { return mean[a] < mean[b]; });
  return permute_states(p, perm);
}

inline ProducerModel train_producer_model(ProducerId producer, std::span<const ItemIndex> items,
                                          std::span<const SocialItem> catalog, std::size_t n_categories,
                                          const BiHmmConfig& cfg) {
  ProducerModel pm;
  pm.producer = producer;
  pm.items.assign(items.begin(), items.end());
  ObsSeq seq;
  seq.reserve(items.size());
  for (auto idx : items) seq.push_back(catalog[idx].category.value);
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.train.seed, 2 * static_cast<std::uint64_t>(producer.value));
  const std::size_t n =
      cfg.producer_states ? cfg.producer_states : select_state_count(seq, n_categories, tc, cfg.max_states);
  pm.params = canonical_state_order(baum_welch(seq, n, n_categories, tc).params);
  pm.decoded_states = viterbi(pm.params, seq).path;
  pm.final_scores = detail::viterbi_forward(pm.params, seq, {}, false, false).delta;
  return pm;
}

/// Distinct items in order of first appearance.
inline std::vector<ItemIndex> items_in_order(std::span<const Interaction> interactions) {
  std::vector<ItemIndex> out;
  std::unordered_map<ItemIndex, bool> seen;
  for (const auto& in : interactions)
    if (seen.emplace(in.item, true).second) out.push_back(in.item);
  return out;
}

/// Items a producer model trains on. Without a catalog, the distinct items
/// of the interactions in first-seen order. With one, every item created up
/// to the last interaction, in creation order.
inline std::vector<ItemIndex> producer_items(const Dataset& ds, std::span<const Interaction> interactions) {
  if (!ds.has_catalog) return items_in_order(interactions);
  std::vector<ItemIndex> out;
  if (interactions.empty()) return out;
  const auto cutoff = interactions.back().timestamp;
  for (ItemIndex i = 0; i < ds.items.size(); ++i)
    if (ds.items[i].timestamp <= cutoff) out.push_back(i);
  std::stable_sort(out.begin(), out.end(),
                   [&](ItemIndex a, ItemIndex b) { return ds.items[a].timestamp < ds.items[b].timestamp; });
  return out;
}

/// One a-HMM per producer over the categories of the given items (temporal
/// order). Producers without items never appear and get the dummy state.
inline ProducerModels train_producer_models(std::span<const ItemIndex> items, std::span<const SocialItem> catalog,
                                            std::size_t n_categories, const BiHmmConfig& cfg) {
  cfg.validate();
  std::map<ProducerId, std::vector<ItemIndex>> by_producer;
  for (auto idx : items) by_producer[catalog[idx].producer].push_back(idx);
  ProducerModels out;
  for (const auto& [producer, list] : by_producer) {
    if (list.empty()) {
      out.warnings.push_back("producer " + std::to_string(producer.value) + " has no items");
      continue;
    }
    auto pm = train_producer_model(producer, list, catalog, n_categories, cfg);
    for (std::size_t t = 0; t < list.size(); ++t) out.item_state[list[t]] = pm.decoded_states[t];
    out.models.emplace(producer, std::move(pm));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Consumer layer
// ---------------------------------------------------------------------------

struct AnnotatedObs {
  CategoryId category;
  std::uint32_t z = 0;

  friend bool operator==(const AnnotatedObs&, const AnnotatedObs&) = default;
};

struct AnnotatedHistory {
  std::vector<AnnotatedObs> obs;
  std::size_t producer_states = 1;  // max state count over the producers involved
};

inline AnnotatedObs annotate_event(const ProfileEvent& ev, const ProducerModels& producers) {
  return {ev.category, producers.state_for(ev.item, ev.producer, ev.category)};
}

inline const ProfileEvent& deref(const ProfileEvent& e) { return e; }
inline const ProfileEvent& deref(const ProfileEvent* e) { return *e; }

template <class Events>
AnnotatedHistory annotate_events(const Events& events, const ProducerModels& producers) {
  AnnotatedHistory h;
  for (const auto& ev : events) {
    const ProfileEvent& e = deref(ev);
    h.obs.push_back(annotate_event(e, producers));
    h.producer_states = std::max(h.producer_states, producers.n_states(e.producer));
  }
  return h;
}

/// Full history (long-term list then window) annotated with producer states.
inline AnnotatedHistory annotate_consumer_history(const UserProfile& profile, const ProducerModels& producers) {
  return annotate_events(profile.history(), producers);
}

struct CompositeStateSpace {
  std::size_t n_consumer_states = 1;
  std::size_t n_producer_states = 1;

  std::size_t size() const { return n_consumer_states * n_producer_states; }
  std::uint32_t index(std::size_t i, std::size_t k) const {
    return static_cast<std::uint32_t>(i * n_producer_states + k);
  }
  std::size_t consumer_part(std::size_t s) const { return s / n_producer_states; }
  std::size_t producer_part(std::size_t s) const { return s % n_producer_states; }

  friend bool operator==(const CompositeStateSpace&, const CompositeStateSpace&) = default;
};

struct ConsumerModel {
  ConsumerId consumer;
  CompositeStateSpace space;
  HmmParams params;
  std::vector<AnnotatedObs> annotated_history;
  bool trained = false;
};

namespace detail {

/// Composite initialization: the plain N^(b) draw, spread evenly over the
/// producer components. Equals the plain draw when there is one component.
inline HmmParams tile_initial(const HmmParams& plain, std::size_t groups, double floor) {
  if (groups <= 1) return plain;
  const std::size_t Nb = plain.n_states;
  const std::size_t N = Nb * groups;
  const double g = 1.0 / static_cast<double>(groups);
  const double inner_floor = std::min(floor * static_cast<double>(groups), 1.0 / static_cast<double>(Nb));
  HmmParams p;
  p.n_states = N;
  p.n_obs = plain.n_obs;
  const auto pi = project_to_floored_simplex(plain.pi, inner_floor);
  p.pi.resize(N);
  for (std::size_t i = 0; i < Nb; ++i)
    for (std::size_t k = 0; k < groups; ++k) p.pi[i * groups + k] = g * pi[i];
  p.A.resize(N * N);
  for (std::size_t i = 0; i < Nb; ++i) {
    const auto row = project_to_floored_simplex(plain.a_row(i), inner_floor);
    for (std::size_t k = 0; k < groups; ++k)
      for (std::size_t j = 0; j < Nb; ++j)
        for (std::size_t kk = 0; kk < groups; ++kk) p.A[(i * groups + k) * N + j * groups + kk] = g * row[j];
  }
  p.B.resize(N * plain.n_obs);
  for (std::size_t i = 0; i < Nb; ++i)
    for (std::size_t k = 0; k < groups; ++k)
      std::copy(plain.b_row(i).begin(), plain.b_row(i).end(),
                p.B.begin() + static_cast<std::ptrdiff_t>((i * groups + k) * plain.n_obs));
  return p;
}

inline std::vector<std::uint32_t> z_track(std::span<const AnnotatedObs> obs, std::size_t groups) {
  std::vector<std::uint32_t> z;
  z.reserve(obs.size());
  for (const auto& o : obs) z.push_back(o.z < groups ? o.z : kAnyComponent);
  return z;
}

inline ObsSeq categories_of(std::span<const AnnotatedObs> obs) {
  ObsSeq out;
  out.reserve(obs.size());
  for (const auto& o : obs) out.push_back(o.category.value);
  return out;
}

}  // namespace detail

/// One-state model holding floored empirical category frequencies (uniform
/// when the history is empty).
inline ConsumerModel empirical_consumer_model(ConsumerId consumer, std::span<const AnnotatedObs> history,
                                              std::size_t n_categories, double floor) {
  ConsumerModel m;
  m.consumer = consumer;
  m.params = HmmParams::uniform(1, n_categories);
  std::vector<double> counts(n_categories, 0.0);
  for (const auto& o : history)
    if (o.category.value < n_categories) counts[o.category.value] += 1.0;
  if (!history.empty()) m.params.B = detail::project_to_floored_simplex(counts, floor);
  m.annotated_history.assign(history.begin(), history.end());
  m.trained = true;
  return m;
}

/// Masked Baum-Welch over composite (consumer state x producer state) states.
/// cfg.seed is used as given.
inline ConsumerModel train_consumer_model(ConsumerId consumer, const AnnotatedHistory& history,
                                          std::size_t n_consumer_states, std::size_t n_categories,
                                          const TrainConfig& cfg) {
  cfg.validate();
  if (history.obs.size() < 2) return empirical_consumer_model(consumer, history.obs, n_categories, cfg.floor);
  if (n_consumer_states == 0) throw ConfigError("consumer state count must be >= 1");
  ConsumerModel m;
  m.consumer = consumer;
  m.space = {n_consumer_states, std::max<std::size_t>(1, history.producer_states)};
  m.annotated_history = history.obs;
  const std::size_t K = m.space.n_producer_states;
  const ObsSeq seq = detail::categories_of(history.obs);
  detail::check_training_input(std::span<const ObsSeq>(&seq, 1), n_consumer_states, n_categories);
  auto init = detail::tile_initial(detail::random_init(n_consumer_states, n_categories, cfg.seed, cfg.floor), K,
                                   cfg.floor);
  std::vector<std::vector<std::uint32_t>> tracks;
  if (K > 1) tracks.push_back(detail::z_track(history.obs, K));
  m.params = detail::run_em(std::move(init), std::span<const ObsSeq>(&seq, 1), tracks, K, cfg).params;
  m.trained = true;
  return m;
}

/// p(c | consumer) given recent annotated observations: masked Viterbi for
/// the current composite state, then one transition step; the unknown
/// producer component of the next item is summed out.
inline std::vector<double> predict_category_prob(const ConsumerModel& model, std::span<const AnnotatedObs> recent,
                                                 std::size_t n_categories) {
  if (!model.trained) return std::vector<double>(n_categories, 1.0 / static_cast<double>(n_categories));
  if (recent.empty()) return detail::prior_prediction(model.params);
  const std::size_t K = model.space.n_producer_states;
  const ObsSeq seq = detail::categories_of(recent);
  detail::check_symbols(model.params, seq);
  const auto z = detail::z_track(recent, K);
  detail::ComponentTrack track;
  if (K > 1) track = detail::ComponentTrack{K, z};
  const auto tr = detail::viterbi_forward(model.params, seq, track, false, false);
  return detail::propagate(model.params, detail::argmax_state(tr.delta));
}

inline std::vector<double> predict_category_prob(const ConsumerModel& model, std::span<const AnnotatedObs> recent) {
  return predict_category_prob(model, recent, model.params.n_obs);
}

struct RankedCategory {
  CategoryId category;
  double probability = 0;
};

/// Descending probability, ties by category id.
inline std::vector<RankedCategory> top_k_categories(std::span<const double> dist, std::size_t k) {
  if (k == 0) throw ConfigError("k must be >= 1");
  std::vector<RankedCategory> out;
  for (std::uint32_t c = 0; c < dist.size(); ++c) out.push_back({CategoryId(c), dist[c]});
  std::stable_sort(out.begin(), out.end(),
                   [](const RankedCategory& a, const RankedCategory& b) { return a.probability > b.probability; });
  if (out.size() > k) out.resize(k);
  return out;
}

inline std::vector<RankedCategory> top_k_categories(const ConsumerModel& model, std::span<const AnnotatedObs> recent,
                                                    std::size_t k) {
  return top_k_categories(predict_category_prob(model, recent), k);
}

/// Rolling BiHMM accuracy on obs[from..) with producer components known for
/// every observed step.
inline double rolling_accuracy(const ConsumerModel& model, std::span<const AnnotatedObs> obs, std::size_t from) {
  const ObsSeq seq = detail::categories_of(obs);
  const std::size_t K = model.space.n_producer_states;
  const auto z = detail::z_track(obs, K);
  return rolling_accuracy(model.params, seq, from, K > 1 ? std::span<const std::uint32_t>(z)
                                                          : std::span<const std::uint32_t>{},
                          K);
}

// ---------------------------------------------------------------------------
// Model bundle
// ---------------------------------------------------------------------------

struct ModelBundle {
  std::size_t n_categories = 0;
  ProducerModels producers;
  std::map<ConsumerId, ConsumerModel> consumers;
};

inline std::uint64_t consumer_seed(std::uint64_t seed, ConsumerId c) {
  return derive_seed(seed, 2 * static_cast<std::uint64_t>(c.value) + 1);
}

/// Consumer state count: the override, or select_state_count on the plain
/// category sequence.
inline std::size_t consumer_state_count(const AnnotatedHistory& h, std::size_t n_categories, const BiHmmConfig& cfg,
                                        std::uint64_t seed) {
  if (cfg.consumer_states) return cfg.consumer_states;
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  return select_state_count(detail::categories_of(h.obs), n_categories, tc, cfg.max_states);
}

/// Trains a b-HMM for every profile against already trained producers.
inline std::map<ConsumerId, ConsumerModel> train_consumer_models(const ProfileMap& profiles,
                                                                 const ProducerModels& producers,
                                                                 std::size_t n_categories, const BiHmmConfig& cfg) {
  cfg.validate();
  std::map<ConsumerId, ConsumerModel> out;
  for (const auto& [id, profile] : profiles) {
    const auto h = annotate_consumer_history(profile, producers);
    TrainConfig tc = cfg.train;
    tc.seed = consumer_seed(cfg.train.seed, id);
    const std::size_t n = consumer_state_count(h, n_categories, cfg, tc.seed);
    out.emplace(id, train_consumer_model(id, h, n, n_categories, tc));
  }
  return out;
}

inline ModelBundle train_models(const Dataset& ds, std::span<const Interaction> interactions,
                                const ProfileMap& profiles, const BiHmmConfig& cfg) {
  ModelBundle b;
  b.n_categories = ds.n_categories();
  const auto items = producer_items(ds, interactions);
  b.producers = train_producer_models(items, ds.items, b.n_categories, cfg);
  b.consumers = train_consumer_models(profiles, b.producers, b.n_categories, cfg);
  return b;
}

// JSON. Models are keyed by numeric user id.
inline void to_json(nlohmann::json& j, const AnnotatedObs& o) { j = nlohmann::json::array({o.category.value, o.z}); }
inline void from_json(const nlohmann::json& j, AnnotatedObs& o) {
  o.category = CategoryId(j.at(0).get<std::uint32_t>());
  o.z = j.at(1).get<std::uint32_t>();
}

inline void to_json(nlohmann::json& j, const ProducerModel& m) {
  j = {{"producer", m.producer.value},
       {"params", m.params},
       {"items", m.items},
       {"decoded_states", m.decoded_states},
       {"final_scores", m.final_scores}};
}
inline void from_json(const nlohmann::json& j, ProducerModel& m) {
  m.producer = ProducerId(j.at("producer").get<std::uint32_t>());
  m.params = j.at("params").get<HmmParams>();
  m.items = j.at("items").get<std::vector<ItemIndex>>();
  m.decoded_states = j.at("decoded_states").get<std::vector<std::uint32_t>>();
  m.final_scores.clear();
  for (const auto& v : j.at("final_scores")) m.final_scores.push_back(v.is_null() ? kNegInf : v.get<double>());
  if (m.decoded_states.size() != m.items.size()) throw DataError("producer model: decoded_states length mismatch");
}

inline void to_json(nlohmann::json& j, const ConsumerModel& m) {
  j = {{"consumer", m.consumer.value},
       {"n_consumer_states", m.space.n_consumer_states},
       {"n_producer_states", m.space.n_producer_states},
       {"params", m.params},
       {"annotated_history", m.annotated_history},
       {"trained", m.trained}};
}
inline void from_json(const nlohmann::json& j, ConsumerModel& m) {
  m.consumer = ConsumerId(j.at("consumer").get<std::uint32_t>());
  m.space.n_consumer_states = j.at("n_consumer_states").get<std::size_t>();
  m.space.n_producer_states = j.at("n_producer_states").get<std::size_t>();
  m.params = j.at("params").get<HmmParams>();
  m.annotated_history = j.at("annotated_history").get<std::vector<AnnotatedObs>>();
  m.trained = j.at("trained").get<bool>();
  if (m.params.n_states != m.space.size()) throw DataError("consumer model: state space mismatch");
}

inline nlohmann::json bundle_to_json(const ModelBundle& b) {
  nlohmann::json producers = nlohmann::json::object();
  for (const auto& [id, m] : b.producers.models) producers[std::to_string(id.value)] = m;
  nlohmann::json consumers = nlohmann::json::object();
  for (const auto& [id, m] : b.consumers) consumers[std::to_string(id.value)] = m;
  return {{"format", "ssrec-models"},
          {"version", 1},
          {"n_categories", b.n_categories},
          {"producers", producers},
          {"consumers", consumers},
          {"warnings", b.producers.warnings}};
}

inline ModelBundle bundle_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "ssrec-models") throw DataError("not a model bundle");
  ModelBundle b;
  b.n_categories = j.at("n_categories").get<std::size_t>();
  for (const auto& [key, val] : j.at("producers").items()) {
    auto m = val.get<ProducerModel>();
    for (std::size_t t = 0; t < m.items.size(); ++t) b.producers.item_state[m.items[t]] = m.decoded_states[t];
    b.producers.models.emplace(m.producer, std::move(m));
  }
  for (const auto& [key, val] : j.at("consumers").items()) {
    auto m = val.get<ConsumerModel>();
    b.consumers.emplace(m.consumer, std::move(m));
  }
  b.producers.warnings = j.value("warnings", std::vector<std::string>{});
  return b;
}

}  // namespace ssrec

#endif  // SSREC_BIHMM_HPP
