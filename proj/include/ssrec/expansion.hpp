#ifndef SSREC_EXPANSION_HPP
#define SSREC_EXPANSION_HPP

#include <algorithm>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "ssrec/domain.hpp"
#include "ssrec/types.hpp"

namespace ssrec {

struct ExpansionConfig {
  std::size_t window = 5;      // d: max sequence distance between co-occurring entities
  std::size_t per_entity = 1;  // m: partners added per original occurrence
  double cap = 0.95;           // gamma: ceiling on expansion weights

  void validate() const {
    if (window == 0) throw ConfigError("expansion window must be >= 1");
    if (!(cap > 0.0) || cap > 1.0) throw ConfigError("expansion cap must be in (0, 1]");
  }
};

struct ExpandedEntity {
  EntityId entity;
  double weight = 1.0;

  friend bool operator==(const ExpandedEntity&, const ExpandedEntity&) = default;
};

struct Partner {
  EntityId entity;
  double weight = 0.0;

  friend bool operator==(const Partner&, const Partner&) = default;
};

/// Per-category proximity scores between entity pairs and the derived
/// expansion partners of every entity.
class CooccurrenceStats {
 public:
  /// Every pair at distance <= window adds 1/distance under the item's category.
  void add_item(const SocialItem& item, std::size_t window) {
    const auto& e = item.entities;
    auto& scores = scores_[item.category];
    for (std::size_t i = 0; i < e.size(); ++i) {
      for (std::size_t j = i + 1; j < e.size() && j - i <= window; ++j) {
        if (e[i] == e[j]) continue;
        scores[pair_key(e[i], e[j])] += 1.0 / static_cast<double>(j - i);
      }
    }
  }

  /// Recomputes partner lists: score normalized by the source entity's best
  /// partner score, capped. Lists sorted by weight desc, then entity id.
  void finalize(double cap) {
    partners_.clear();
    for (const auto& [cat, scores] : scores_) {
      std::map<EntityId, std::vector<std::pair<EntityId, double>>> raw;
      for (const auto& [key, s] : scores) {
        const EntityId a(static_cast<std::uint32_t>(key >> 32));
        const EntityId b(static_cast<std::uint32_t>(key & 0xffffffffULL));
        raw[a].emplace_back(b, s);
        raw[b].emplace_back(a, s);
      }
      for (auto& [src, list] : raw) {
        double best = 0;
        for (const auto& [dst, s] : list) best = std::max(best, s);
        std::vector<Partner> out;
        out.reserve(list.size());
        for (const auto& [dst, s] : list) out.push_back({dst, std::min(s / best, cap)});
        sort_partners(out);
        partners_[slot_key(cat, src)] = std::move(out);
      }
    }
  }

  void add_score(CategoryId c, EntityId a, EntityId b, double s) {
    if (a == b) throw DataError("an entity cannot pair with itself");
    scores_[c][pair_key(a, b)] += s;
  }

  double score(CategoryId c, EntityId a, EntityId b) const {
    if (a == b) return 0.0;
    auto it = scores_.find(c);
    if (it == scores_.end()) return 0.0;
    auto s = it->second.find(pair_key(a, b));
    return s == it->second.end() ? 0.0 : s->second;
  }

  std::span<const Partner> partners(CategoryId c, EntityId e) const {
    auto it = partners_.find(slot_key(c, e));
    if (it == partners_.end()) return {};
    return it->second;
  }

  /// Overrides the partner list of one entity (used for hand-built fixtures).
  void set_partners(CategoryId c, EntityId e, std::vector<Partner> list) {
    for (const auto& p : list) {
      if (p.entity == e) throw DataError("an entity cannot expand to itself");
      if (!(p.weight > 0.0) || p.weight > 1.0) throw DataError("expansion weight must be in (0, 1]");
    }
    sort_partners(list);
    partners_[slot_key(c, e)] = std::move(list);
  }

  std::size_t pair_count() const {
    std::size_t n = 0;
    for (const auto& [c, s] : scores_) n += s.size();
    return n;
  }

  const std::map<CategoryId, std::unordered_map<std::uint64_t, double>>& raw_scores() const { return scores_; }
  const std::unordered_map<std::uint64_t, std::vector<Partner>>& raw_partners() const { return partners_; }

  static std::uint64_t pair_key(EntityId a, EntityId b) {
    if (b < a) std::swap(a, b);
    return (static_cast<std::uint64_t>(a.value) << 32) | b.value;
  }
  static std::uint64_t slot_key(CategoryId c, EntityId e) {
    return (static_cast<std::uint64_t>(c.value) << 32) | e.value;
  }

 private:
  static void sort_partners(std::vector<Partner>& v) {
    std::sort(v.begin(), v.end(), [](const Partner& a, const Partner& b) {
      if (a.weight != b.weight) return a.weight > b.weight;
      return a.entity < b.entity;
    });
  }

  std::map<CategoryId, std::unordered_map<std::uint64_t, double>> scores_;
  std::unordered_map<std::uint64_t, std::vector<Partner>> partners_;
};

inline CooccurrenceStats build_cooccurrence(std::span<const SocialItem> items, const ExpansionConfig& cfg) {
  cfg.validate();
  CooccurrenceStats stats;
  for (const auto& item : items) stats.add_item(item, cfg.window);
  stats.finalize(cfg.cap);
  return stats;
}

inline CooccurrenceStats build_cooccurrence(std::span<const ItemIndex> items, std::span<const SocialItem> catalog,
                                            const ExpansionConfig& cfg) {
  cfg.validate();
  CooccurrenceStats stats;
  for (auto idx : items) stats.add_item(catalog[idx], cfg.window);
  stats.finalize(cfg.cap);
  return stats;
}

/// E -> E': each original occurrence (weight 1) followed by its top-m partners.
inline std::vector<ExpandedEntity> expand_entities(std::span<const EntityId> entities, CategoryId category,
                                                   const CooccurrenceStats& stats, std::size_t m) {
  std::vector<ExpandedEntity> out;
  out.reserve(entities.size() * (1 + m));
  for (auto e : entities) {
    out.push_back({e, 1.0});
    auto partners = stats.partners(category, e);
    for (std::size_t i = 0; i < partners.size() && i < m; ++i) out.push_back({partners[i].entity, partners[i].weight});
  }
  return out;
}

/// Unexpanded entity list (all weights 1).
inline std::vector<ExpandedEntity> plain_entities(std::span<const EntityId> entities) {
  std::vector<ExpandedEntity> out;
  out.reserve(entities.size());
  for (auto e : entities) out.push_back({e, 1.0});
  return out;
}

// Sidecar JSON keyed by category and entity names.
inline nlohmann::json stats_to_json(const CooccurrenceStats& stats, const Vocabularies& vocab) {
  nlohmann::json cats = nlohmann::json::object();
  for (const auto& [c, scores] : stats.raw_scores()) {
    std::vector<std::pair<std::uint64_t, double>> sorted(scores.begin(), scores.end());
    std::sort(sorted.begin(), sorted.end());
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& [key, s] : sorted) {
      pairs.push_back({vocab.entities.name(static_cast<std::uint32_t>(key >> 32)),
                       vocab.entities.name(static_cast<std::uint32_t>(key & 0xffffffffULL)), s});
    }
    cats[vocab.categories.name(c.value)]["pairs"] = pairs;
  }
  std::vector<std::uint64_t> keys;
  for (const auto& [key, list] : stats.raw_partners()) keys.push_back(key);
  std::sort(keys.begin(), keys.end());
  for (auto key : keys) {
    const auto& list = stats.raw_partners().at(key);
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : list) arr.push_back({vocab.entities.name(p.entity.value), p.weight});
    const auto cname = vocab.categories.name(static_cast<std::uint32_t>(key >> 32));
    cats[cname]["partners"][vocab.entities.name(static_cast<std::uint32_t>(key & 0xffffffffULL))] = arr;
  }
  return {{"format", "ssrec-cooccurrence"}, {"categories", cats}};
}

/// Loads a sidecar. Names missing from the vocabulary are skipped. Explicit
/// partner lists win over ones derived from pairs.
inline CooccurrenceStats stats_from_json(const nlohmann::json& j, const Vocabularies& vocab, double cap) {
  CooccurrenceStats stats;
  const auto& cats = j.at("categories");
  for (const auto& [cname, body] : cats.items()) {
    const auto c = vocab.categories.find(cname);
    if (!c) continue;
    if (body.contains("pairs")) {
      for (const auto& p : body.at("pairs")) {
        const auto a = vocab.entities.find(p.at(0).get<std::string>());
        const auto b = vocab.entities.find(p.at(1).get<std::string>());
        if (!a || !b || *a == *b) continue;
        stats.add_score(CategoryId(*c), EntityId(*a), EntityId(*b), p.at(2).get<double>());
      }
    }
  }
  stats.finalize(cap);
  for (const auto& [cname, body] : cats.items()) {
    const auto c = vocab.categories.find(cname);
    if (!c || !body.contains("partners")) continue;
    for (const auto& [ename, arr] : body.at("partners").items()) {
      const auto e = vocab.entities.find(ename);
      if (!e) continue;
      std::vector<Partner> list;
      for (const auto& p : arr) {
        const auto pe = vocab.entities.find(p.at(0).get<std::string>());
        if (!pe) continue;
        list.push_back({EntityId(*pe), p.at(1).get<double>()});
      }
      stats.set_partners(CategoryId(*c), EntityId(*e), std::move(list));
    }
  }
  return stats;
}

}  // namespace ssrec

#endif  // SSREC_EXPANSION_HPP
