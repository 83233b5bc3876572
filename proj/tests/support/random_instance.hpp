#ifndef SSREC_TESTS_RANDOM_INSTANCE_HPP
#define SSREC_TESTS_RANDOM_INSTANCE_HPP

// Random end-to-end index instances shared by the index tests and the
// acceptance binary.

#include <random>
#include <string>
#include <vector>

#include "ssrec/ssrec.hpp"

namespace ssrec::testing {

struct Shape {
  std::size_t max_users = 80;
  std::size_t max_categories = 6;
  std::size_t max_entities = 40;
  std::size_t max_producers = 10;
  std::size_t items = 60;
  std::size_t interactions = 400;
  double train_fraction = 0.75;
};

struct Instance {
  Dataset ds;
  std::vector<Interaction> train;
  std::vector<UpdateEvent> updates;  // the interactions after the training cut
  ModelBundle models;
  BackgroundModel bg;
  CooccurrenceStats stats;
  ScoringConfig scoring;
  IndexConfig index_cfg;
  std::size_t window = 5;
  CppseIndex index;

  ScoringItem item(std::size_t i) const { return ScoringItem::from(ds.items[i], &stats, 1); }
};

inline std::size_t draw(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng() % (hi - lo + 1));
}

inline Instance random_instance(std::uint64_t seed, const Shape& shape = {}) {
  std::mt19937_64 rng(seed);
  Instance in;
  auto& ds = in.ds;
  const std::size_t C = draw(rng, 1, shape.max_categories);
  const std::size_t U = draw(rng, 1, shape.max_users);
  const std::size_t E = draw(rng, 1, shape.max_entities);
  const std::size_t P = draw(rng, 1, shape.max_producers);
  for (std::size_t c = 0; c < C; ++c) ds.vocab.categories.intern("c" + std::to_string(c));
  for (std::size_t u = 0; u < std::max(U, P); ++u) ds.vocab.users.intern("u" + std::to_string(u));
  for (std::size_t e = 0; e < E; ++e) ds.vocab.entities.intern("e" + std::to_string(e));
  for (std::size_t i = 0; i < shape.items; ++i) {
    SocialItem it;
    it.item_id = "i" + std::to_string(i);
    it.category = CategoryId(static_cast<std::uint32_t>(rng() % C));
    it.producer = ProducerId(static_cast<std::uint32_t>(rng() % P));
    const std::size_t ne = rng() % 5;
    for (std::size_t k = 0; k < ne; ++k) it.entities.push_back(EntityId(static_cast<std::uint32_t>(rng() % E)));
    ds.items.push_back(it);
    ds.vocab.items.intern(it.item_id);
  }
  for (std::size_t t = 0; t < shape.interactions; ++t)
    ds.interactions.push_back({ConsumerId(static_cast<std::uint32_t>(rng() % U)),
                               static_cast<ItemIndex>(rng() % shape.items), static_cast<std::int64_t>(t)});
  const auto cut = static_cast<std::size_t>(static_cast<double>(shape.interactions) * shape.train_fraction);
  in.train.assign(ds.interactions.begin(), ds.interactions.begin() + static_cast<std::ptrdiff_t>(cut));
  for (std::size_t t = cut; t < ds.interactions.size(); ++t) {
    const auto& x = ds.interactions[t];
    in.updates.push_back({x.consumer, make_event(ds.items[x.item], x.item, x.timestamp)});
  }
  const auto profiles = build_profiles(ds, in.train, in.window);
  BiHmmConfig bc;
  bc.producer_states = draw(rng, 1, 2);
  bc.consumer_states = draw(rng, 1, 2);
  bc.train.max_iterations = 10;
  bc.train.seed = seed;
  in.models = train_models(ds, in.train, profiles, bc);
  in.bg = BackgroundModel::from_dataset(ds, in.train);
  in.stats = build_cooccurrence(std::span<const SocialItem>(ds.items), ExpansionConfig{});
  in.scoring.lambda_s = 0.1 * static_cast<double>(draw(rng, 1, 9));
  in.index_cfg.fanout = draw(rng, 2, 6);
  in.index_cfg.reserve = seed % 2 ? 0.0 : 0.2;
  in.index_cfg.hash.table_size = 64;
  in.index_cfg.block_threshold = 0.3 + 0.6 * static_cast<double>(rng() % 100) / 100.0;
  in.index = build_index(make_user_states(profiles, in.models, in.scoring.floor), ds.vocab, in.bg, in.scoring,
                         in.index_cfg, C, in.window);
  return in;
}

/// knn_query against brute force over the reachable users.
inline bool matches_oracle(const CppseIndex& ix, const ScoringItem& item, std::size_t k) {
  return ix.knn_query(item, k) == brute_force_top_k(item, ix.reachable_users(item), k, ix.background(), ix.scoring());
}

struct BoundCheck {
  std::size_t entries = 0;
  std::size_t violations = 0;
};

/// Walks every IEntry of every tree of the item's category: its bound must
/// dominate each child's bound and every descendant leaf score.
inline BoundCheck check_bounds(const CppseIndex& ix, const ScoringItem& item) {
  BoundCheck out;
  const double lambda = ix.scoring().lambda_s;
  for (const auto& ti : ix.trees()) {
    if (ti.category != item.category) continue;
    const auto plan = ix.plan(item, ti.block);
    const auto& tree = ti.tree;
    // Returns the best leaf score below node n.
    auto walk = [&](auto&& self, std::uint32_t n, double bound_above) -> double {
      const auto& node = tree.node(n);
      double best = kNegInf;
      if (node.leaf) {
        for (const auto& e : node.entries) {
          const double s = ix.leaf_score(e, item, lambda);
          if (s > bound_above) ++out.violations;
          best = std::max(best, s);
        }
        return best;
      }
      for (std::size_t i = 0; i < node.children.size(); ++i) {
        ++out.entries;
        const double b = ix.upper_bound(plan, node.child_sigs[i], lambda);
        if (b > bound_above) ++out.violations;
        const double below = self(self, node.children[i], b);
        if (below > b) ++out.violations;
        best = std::max(best, below);
      }
      return best;
    };
    walk(walk, tree.root(), std::numeric_limits<double>::infinity());
  }
  return out;
}

}  // namespace ssrec::testing

#endif  // SSREC_TESTS_RANDOM_INSTANCE_HPP
