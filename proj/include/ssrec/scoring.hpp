#ifndef SSREC_SCORING_HPP
#define SSREC_SCORING_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "ssrec/bihmm.hpp"
#include "ssrec/domain.hpp"
#include "ssrec/expansion.hpp"
#include "ssrec/types.hpp"

namespace ssrec {

struct ScoringConfig {
  double lambda_s = 0.4;
  double mu_producer = 50.0;
  double mu_entity = 100.0;
  double floor = kDefaultFloor;

  void validate() const {
    if (!(lambda_s >= 0.0 && lambda_s <= 1.0)) throw ConfigError("lambda_s must be in [0, 1]");
    if (!(mu_producer >= 0.0) || !(mu_entity >= 0.0)) throw ConfigError("Dirichlet mu must be >= 0");
    if (!(floor > 0.0 && floor < 1.0)) throw ConfigError("probability floor must be in (0, 1)");
  }
};

/// Corpus-wide relative frequencies of producers and entity occurrences.
struct BackgroundModel {
  std::vector<double> producer;  // indexed by UserId
  std::vector<double> entity;    // indexed by EntityId

  double producer_prob(ProducerId p) const { return p.value < producer.size() ? producer[p.value] : 0.0; }
  double entity_prob(EntityId e) const { return e.value < entity.size() ? entity[e.value] : 0.0; }

  static BackgroundModel from_interactions(std::span<const Interaction> interactions,
                                           std::span<const SocialItem> items, std::size_t n_users,
                                           std::size_t n_entities) {
    std::vector<double> pc(n_users, 0.0), ec(n_entities, 0.0);
    double pt = 0, et = 0;
    for (const auto& in : interactions) {
      const auto& item = items[in.item];
      if (item.producer.value >= pc.size()) pc.resize(item.producer.value + 1, 0.0);
      pc[item.producer.value] += 1.0;
      pt += 1.0;
      for (auto e : item.entities) {
        if (e.value >= ec.size()) ec.resize(e.value + 1, 0.0);
        ec[e.value] += 1.0;
        et += 1.0;
      }
    }
    BackgroundModel bg;
    bg.producer = std::move(pc);
    bg.entity = std::move(ec);
    if (pt > 0)
      for (auto& v : bg.producer) v /= pt;
    if (et > 0)
      for (auto& v : bg.entity) v /= et;
    return bg;
  }

  static BackgroundModel from_dataset(const Dataset& ds, std::span<const Interaction> interactions) {
    return from_interactions(interactions, ds.items, ds.vocab.users.size(), ds.vocab.entities.size());
  }

  friend bool operator==(const BackgroundModel&, const BackgroundModel&) = default;
};

/// (count + mu * bg) / (total + mu). Every smoothed probability in the
/// library goes through this one expression, so stored and recomputed values
/// agree bit for bit. Returns 0 when the estimate is undefined.
inline double dirichlet_smoothed(std::uint32_t count, std::uint32_t total, double mu, double bg) {
  const double denom = static_cast<double>(total) + mu;
  if (!(denom > 0.0)) return 0.0;
  return (static_cast<double>(count) + mu * bg) / denom;
}

inline double smoothed_producer_prob(const LongTermList& lt, ProducerId p, const BackgroundModel& bg, double mu) {
  if (mu < 0) throw ConfigError("mu must be >= 0");
  if (lt.total_producers() == 0 && mu == 0.0) throw DataError("producer MLE undefined for an empty long-term list");
  return dirichlet_smoothed(lt.producer_count(p), lt.total_producers(), mu, bg.producer_prob(p));
}

inline double smoothed_entity_prob(const LongTermList& lt, EntityId e, const BackgroundModel& bg, double mu) {
  if (mu < 0) throw ConfigError("mu must be >= 0");
  if (lt.total_entities() == 0 && mu == 0.0) throw DataError("entity MLE undefined for an empty long-term list");
  return dirichlet_smoothed(lt.entity_count(e), lt.total_entities(), mu, bg.entity_prob(e));
}

inline double floored_log(double p, double floor) { return std::log(std::max(p, floor)); }

/// log p(c) + log p(producer) + log sum_e w_e p(e), each argument floored.
inline double long_term_score(double p_category, double p_producer, double entity_mass, double floor) {
  return floored_log(p_category, floor) + floored_log(p_producer, floor) + floored_log(entity_mass, floor);
}

inline double short_term_score(double p_category, double floor) { return floored_log(p_category, floor); }

inline double combined_score(double long_term, double short_term, double lambda_s) {
  return (1.0 - lambda_s) * long_term + lambda_s * short_term;
}

/// The one place raw probabilities become a score. Leaves and upper bounds
/// both go through it.
inline double assemble_score(double p_long, double p_producer, double entity_mass, double p_short,
                             const ScoringConfig& cfg) {
  return combined_score(long_term_score(p_long, p_producer, entity_mass, cfg.floor),
                        short_term_score(p_short, cfg.floor), cfg.lambda_s);
}

/// An item as the scorer sees it: category, producer, expanded entities.
struct ScoringItem {
  CategoryId category;
  ProducerId producer;
  std::vector<EntityId> original;          // E as given, hashed by the index
  std::vector<ExpandedEntity> entities;    // E' with weights

  static ScoringItem from(const SocialItem& item, const CooccurrenceStats* stats, std::size_t per_entity) {
    ScoringItem s;
    s.category = item.category;
    s.producer = item.producer;
    s.original = item.entities;
    s.entities = stats ? expand_entities(item.entities, item.category, *stats, per_entity)
                       : plain_entities(item.entities);
    return s;
  }
};

/// A consumer ready for scoring: profile plus the BiHMM category
/// predictions conditioned on the long-term list and on the window.
struct UserState {
  ConsumerId consumer;
  UserProfile profile;
  std::vector<double> p_long;
  std::vector<double> p_short;
};

using UserStates = std::map<ConsumerId, UserState>;

inline double category_prob(std::span<const double> dist, CategoryId c) {
  return c.value < dist.size() ? dist[c.value] : 0.0;
}

/// sum over occurrences (in order) of w_e * p(e | user).
inline double entity_mass(const LongTermList& lt, std::span<const ExpandedEntity> entities, const BackgroundModel& bg,
                          double mu) {
  double s = 0;
  for (const auto& x : entities)
    s += x.weight * dirichlet_smoothed(lt.entity_count(x.entity), lt.total_entities(), mu, bg.entity_prob(x.entity));
  return s;
}

struct ScoreTerms {
  double p_long = 0;
  double p_producer = 0;
  double entity_mass = 0;
  double p_short = 0;
};

inline ScoreTerms score_terms(const UserState& u, const ScoringItem& item, const BackgroundModel& bg,
                              const ScoringConfig& cfg) {
  const auto& lt = u.profile.long_term;
  ScoreTerms t;
  t.p_long = category_prob(u.p_long, item.category);
  t.p_producer = dirichlet_smoothed(lt.producer_count(item.producer), lt.total_producers(), cfg.mu_producer,
                                    bg.producer_prob(item.producer));
  t.entity_mass = entity_mass(lt, item.entities, bg, cfg.mu_entity);
  t.p_short = category_prob(u.p_short, item.category);
  return t;
}

inline double long_term_score(const UserState& u, const ScoringItem& item, const BackgroundModel& bg,
                              const ScoringConfig& cfg) {
  const auto t = score_terms(u, item, bg, cfg);
  return long_term_score(t.p_long, t.p_producer, t.entity_mass, cfg.floor);
}

inline double short_term_score(const UserState& u, const ScoringItem& item, const ScoringConfig& cfg) {
  return short_term_score(category_prob(u.p_short, item.category), cfg.floor);
}

inline double combined_score(const UserState& u, const ScoringItem& item, const BackgroundModel& bg,
                             const ScoringConfig& cfg) {
  const auto t = score_terms(u, item, bg, cfg);
  return assemble_score(t.p_long, t.p_producer, t.entity_mass, t.p_short, cfg);
}

// ---------------------------------------------------------------------------
// User states from models
// ---------------------------------------------------------------------------

/// Computes p_long / p_short for a profile. Consumers without a trained
/// model get a one-state empirical model of their own history.
inline UserState make_user_state(UserProfile profile, const ModelBundle& models, double floor) {
  UserState u;
  u.consumer = profile.consumer;
  const auto lt = annotate_events(profile.long_term.events(), models.producers);
  const auto win = annotate_events(profile.short_term.events(), models.producers);
  const auto it = models.consumers.find(profile.consumer);
  if (it != models.consumers.end() && it->second.trained) {
    u.p_long = predict_category_prob(it->second, lt.obs, models.n_categories);
    u.p_short = predict_category_prob(it->second, win.obs, models.n_categories);
  } else {
    const auto full = annotate_consumer_history(profile, models.producers);
    const auto fallback = empirical_consumer_model(profile.consumer, full.obs, models.n_categories, floor);
    u.p_long = predict_category_prob(fallback, lt.obs, models.n_categories);
    u.p_short = predict_category_prob(fallback, win.obs, models.n_categories);
  }
  u.profile = std::move(profile);
  return u;
}

inline UserStates make_user_states(const ProfileMap& profiles, const ModelBundle& models, double floor) {
  UserStates out;
  for (const auto& [id, p] : profiles) out.emplace(id, make_user_state(p, models, floor));
  return out;
}

// ---------------------------------------------------------------------------
// Ranking
// ---------------------------------------------------------------------------

struct ScoredUser {
  ConsumerId consumer;
  double score = 0;

  friend bool operator==(const ScoredUser&, const ScoredUser&) = default;
};

/// Higher score first, then smaller ConsumerId.
inline bool ranks_before(const ScoredUser& a, const ScoredUser& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.consumer < b.consumer;
}

/// Scores every given user and keeps the best k.
template <class Range>
std::vector<ScoredUser> brute_force_top_k(const ScoringItem& item, const Range& users, std::size_t k,
                                          const BackgroundModel& bg, const ScoringConfig& cfg) {
  if (k == 0) throw ConfigError("k must be >= 1");
  std::vector<ScoredUser> all;
  for (const auto& entry : users) {
    const UserState& u = [&]() -> const UserState& {
      if constexpr (requires { entry.second.profile; }) return entry.second;
      else if constexpr (requires { entry->profile; }) return *entry;
      else return entry;
    }();
    all.push_back({u.consumer, combined_score(u, item, bg, cfg)});
  }
  const std::size_t n = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(), ranks_before);
  all.resize(n);
  return all;
}

}  // namespace ssrec

#endif  // SSREC_SCORING_HPP
