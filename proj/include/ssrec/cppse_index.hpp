#ifndef SSREC_CPPSE_INDEX_HPP
#define SSREC_CPPSE_INDEX_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ssrec/bihmm.hpp"
#include "ssrec/domain.hpp"
#include "ssrec/hash_table.hpp"
#include "ssrec/scoring.hpp"
#include "ssrec/signature_tree.hpp"
#include "ssrec/types.hpp"

namespace ssrec {

struct IndexConfig {
  HashParams hash;
  std::size_t fanout = 16;
  double block_threshold = 0.6;  // tau_b
  double reserve = 0.2;          // spare vocabulary fraction per block

  void validate() const {
    hash.validate();
    if (fanout < 2) throw ConfigError("fanout must be >= 2");
    if (!(block_threshold > 0.0 && block_threshold <= 1.0)) throw ConfigError("block threshold must be in (0, 1]");
    if (!(reserve >= 0.0 && reserve <= 10.0)) throw ConfigError("reserve fraction must be in [0, 10]");
  }
};

// ---------------------------------------------------------------------------
// Blocking
// ---------------------------------------------------------------------------

/// L2-normalized category counts over the whole history (long-term + window).
inline std::vector<double> interest_vector(const UserProfile& p, std::size_t n_categories) {
  std::vector<double> v(n_categories, 0.0);
  for (const auto* ev : p.history())
    if (ev->category.value < n_categories) v[ev->category.value] += 1.0;
  double norm = 0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm > 0)
    for (auto& x : v) x /= norm;
  return v;
}

/// One-pass clustering state. A centroid is the running mean of member
/// vectors; cosine is scale-free, so only the sum is kept.
class BlockAssigner {
 public:
  BlockAssigner(std::size_t n_categories, double threshold) : dim_(n_categories), threshold_(threshold) {}

  /// Joins the most similar block if cosine >= threshold (ties to the lower
  /// block id), else opens a new block. Returns the block id.
  std::uint32_t assign(const std::vector<double>& v) {
    std::uint32_t best = 0;
    double best_sim = -2.0;
    for (std::uint32_t b = 0; b < sums_.size(); ++b) {
      const double s = cosine(v, sums_[b]);
      if (s > best_sim) {
        best_sim = s;
        best = b;
      }
    }
    if (!sums_.empty() && best_sim >= threshold_) {
      for (std::size_t i = 0; i < dim_; ++i) sums_[best][i] += v[i];
      return best;
    }
    sums_.push_back(v);
    return static_cast<std::uint32_t>(sums_.size() - 1);
  }

  const std::vector<std::vector<double>>& sums() const { return sums_; }
  void restore(std::vector<std::vector<double>> sums) { sums_ = std::move(sums); }

  static double cosine(const std::vector<double>& v, const std::vector<double>& c) {
    double dot = 0, nv = 0, nc = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      dot += v[i] * c[i];
      nv += v[i] * v[i];
      nc += c[i] * c[i];
    }
    if (nv == 0 || nc == 0) return 0.0;
    return dot / (std::sqrt(nv) * std::sqrt(nc));
  }

 private:
  std::size_t dim_;
  double threshold_;
  std::vector<std::vector<double>> sums_;
};

/// One pass over consumers in id order; consumers with empty histories are
/// left out. Returns members per block.
inline std::vector<std::vector<ConsumerId>> build_blocks(const ProfileMap& profiles, std::size_t n_categories,
                                                         double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ConfigError("block threshold must be in (0, 1]");
  BlockAssigner assigner(n_categories, threshold);
  std::vector<std::vector<ConsumerId>> blocks;
  for (const auto& [id, p] : profiles) {
    if (p.total_events() == 0) continue;
    const auto b = assigner.assign(interest_vector(p, n_categories));
    if (b >= blocks.size()) blocks.resize(b + 1);
    blocks[b].push_back(id);
  }
  return blocks;
}

inline std::vector<std::vector<ConsumerId>> build_blocks(const UserStates& states, std::size_t n_categories,
                                                         double threshold) {
  ProfileMap view;
  for (const auto& [id, s] : states) view.emplace(id, s.profile);
  return build_blocks(view, n_categories, threshold);
}

/// Ordered vocabulary with a fixed capacity; ids past the capacity still get
/// slots but flag the block for a rebuild.
class SlotVocabulary {
 public:
  std::optional<std::uint32_t> slot(std::uint32_t id) const {
    auto it = slots_.find(id);
    if (it == slots_.end()) return std::nullopt;
    return it->second;
  }
  /// Returns true if the id was new.
  bool add(std::uint32_t id) {
    if (slots_.count(id)) return false;
    slots_.emplace(id, static_cast<std::uint32_t>(ids_.size()));
    ids_.push_back(id);
    return true;
  }
  std::size_t size() const { return ids_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool overflowing() const { return ids_.size() > capacity_; }
  const std::vector<std::uint32_t>& ids() const { return ids_; }

  void reset_capacity(double reserve) {
    capacity_ = ids_.size() + static_cast<std::size_t>(std::ceil(reserve * static_cast<double>(ids_.size())));
    if (capacity_ == 0) capacity_ = 1;
  }
  void restore(std::vector<std::uint32_t> ids, std::size_t capacity) {
    ids_.clear();
    slots_.clear();
    for (auto id : ids) add(id);
    capacity_ = capacity;
  }

  friend bool operator==(const SlotVocabulary& a, const SlotVocabulary& b) {
    return a.ids_ == b.ids_ && a.capacity_ == b.capacity_;
  }

 private:
  std::vector<std::uint32_t> ids_;
  std::unordered_map<std::uint32_t, std::uint32_t> slots_;
  std::size_t capacity_ = 0;
};

struct UserBlock {
  std::uint32_t id = 0;
  std::vector<ConsumerId> members;          // join order
  std::set<CategoryId> categories;
  SlotVocabulary producers;                 // U^p_b
  SlotVocabulary entities;                  // E_b
  std::map<CategoryId, std::uint32_t> trees;  // category -> tree id
};

/// A user inside the index: scoring state plus slot-keyed impacts.
struct UserRecord {
  UserState state;
  std::uint32_t block = 0;
  std::shared_ptr<const Impacts> impacts;
};

struct TreeInfo {
  std::uint32_t block = 0;
  CategoryId category;
  SignatureTree tree;
};

/// An item encoded against one block's vocabularies.
struct PseudoQuery {
  std::uint32_t block = 0;
  CategoryId category;
  std::vector<double> f_producer;  // one-hot over U^p_b
  std::vector<double> f_entity;    // occurrence counts over E_b
  std::vector<double> w_entity;    // max weight per entity over E_b

  friend bool operator==(const PseudoQuery&, const PseudoQuery&) = default;
};

/// A profile update: one new interaction for one consumer.
struct UpdateEvent {
  ConsumerId consumer;
  ProfileEvent event;
};

struct UpdateReport {
  std::size_t profiles_updated = 0;
  std::size_t new_users = 0;
  std::size_t new_blocks = 0;
  std::size_t new_hash_links = 0;
  std::size_t reserve_slots_used = 0;
  std::vector<std::uint32_t> rebuilt_blocks;
};

struct QueryStats {
  std::size_t trees = 0;
  std::size_t nodes_expanded = 0;
  std::size_t entries_bounded = 0;
  std::size_t leaves_scored = 0;
  std::size_t pruned = 0;
};

/// Per-block query plan: the pseudo-query plus background values for
/// producers and entities outside the block vocabulary.
struct QueryPlan {
  std::uint32_t block = 0;
  std::optional<std::uint32_t> producer_slot;
  double producer_bg = 0;
  struct Occurrence {
    std::optional<std::uint32_t> slot;
    double weight = 0;  // max weight of this entity across E'
    double bg = 0;
  };
  std::vector<Occurrence> occurrences;  // E' order
};

class CppseIndex {
 public:
  CppseIndex() : hash_(HashParams{}) {}

  /// Builds blocks (or takes the given ones), trees and the hash table.
  static CppseIndex build(const UserStates& states, const Vocabularies& vocab, const BackgroundModel& bg,
                          const ScoringConfig& scoring, const IndexConfig& cfg, std::size_t n_categories,
                          std::size_t window_capacity,
                          const std::vector<std::vector<ConsumerId>>* blocks = nullptr) {
    scoring.validate();
    cfg.validate();
    CppseIndex ix;
    ix.cfg_ = cfg;
    ix.scoring_ = scoring;
    ix.vocab_ = vocab;
    ix.bg_ = bg;
    ix.n_categories_ = n_categories;
    ix.window_capacity_ = window_capacity;
    ix.hash_ = ChainedHashTable(cfg.hash);
    ix.assigner_ = BlockAssigner(n_categories, cfg.block_threshold);

    std::vector<std::vector<ConsumerId>> members;
    if (blocks) {
      members = *blocks;
    } else {
      members = build_blocks(states, n_categories, cfg.block_threshold);
    }
    // Centroid sums follow the block membership, whichever way it was formed.
    std::vector<std::vector<double>> sums(members.size(), std::vector<double>(n_categories, 0.0));
    for (std::uint32_t b = 0; b < members.size(); ++b) {
      UserBlock blk;
      blk.id = b;
      for (auto c : members[b]) {
        auto it = states.find(c);
        if (it == states.end()) throw DataError("block member " + std::to_string(c.value) + " has no state");
        if (it->second.profile.total_events() == 0) continue;
        const auto v = interest_vector(it->second.profile, n_categories);
        for (std::size_t i = 0; i < n_categories; ++i) sums[b][i] += v[i];
        blk.members.push_back(c);
        const auto rec = static_cast<std::uint32_t>(ix.records_.size());
        ix.records_.push_back(UserRecord{it->second, b, nullptr});
        ix.record_of_[c] = rec;
        for (const auto* ev : it->second.profile.history()) add_event_vocab(blk, *ev);
      }
      blk.producers.reset_capacity(cfg.reserve);
      blk.entities.reset_capacity(cfg.reserve);
      ix.blocks_.push_back(std::move(blk));
    }
    ix.assigner_.restore(std::move(sums));
    for (auto& r : ix.records_) ix.refresh_impacts(r);
    for (auto& blk : ix.blocks_) ix.build_block_trees(blk.id);
    return ix;
  }

  // --- accessors -----------------------------------------------------------
  const IndexConfig& config() const { return cfg_; }
  const ScoringConfig& scoring() const { return scoring_; }
  const Vocabularies& vocab() const { return vocab_; }
  Vocabularies& mutable_vocab() { return vocab_; }
  const BackgroundModel& background() const { return bg_; }
  std::size_t n_categories() const { return n_categories_; }
  std::size_t window_capacity() const { return window_capacity_; }
  const std::vector<UserBlock>& blocks() const { return blocks_; }
  const std::vector<TreeInfo>& trees() const { return trees_; }
  const ChainedHashTable& hash_table() const { return hash_; }
  const std::vector<UserRecord>& records() const { return records_; }
  const BlockAssigner& assigner() const { return assigner_; }

  const UserRecord* record(ConsumerId c) const {
    auto it = record_of_.find(c);
    return it == record_of_.end() ? nullptr : &records_[it->second];
  }

  /// Current user states (for rebuilding or brute-force comparison).
  UserStates states() const {
    UserStates out;
    for (const auto& r : records_) out.emplace(r.state.consumer, r.state);
    return out;
  }

  /// Block membership, block by block.
  std::vector<std::vector<ConsumerId>> block_members() const {
    std::vector<std::vector<ConsumerId>> out;
    for (const auto& b : blocks_) out.push_back(b.members);
    return out;
  }

  std::string phrase(CategoryId c, EntityId e) const {
    return vocab_.categories.name(c.value) + "#" + vocab_.entities.name(e.value);
  }

  std::optional<std::uint32_t> tree_of(std::uint32_t block, CategoryId c) const {
    const auto& t = blocks_.at(block).trees;
    auto it = t.find(c);
    if (it == t.end()) return std::nullopt;
    return it->second;
  }

  // --- querying ------------------------------------------------------------

  /// Trees reached by hashing (category, entity) for the item's original
  /// entities; when nothing matches, every tree of the item's category.
  std::vector<std::uint32_t> locate_trees(const ScoringItem& item) const {
    std::vector<std::uint32_t> out;
    if (item.category.value >= vocab_.categories.size()) return out;
    for (auto e : item.original) {
      if (e.value >= vocab_.entities.size()) continue;
      if (const auto* t = hash_.find(phrase(item.category, e), item.category, e))
        out.insert(out.end(), t->trees.begin(), t->trees.end());
    }
    if (out.empty()) {
      for (const auto& b : blocks_)
        if (auto it = b.trees.find(item.category); it != b.trees.end()) out.push_back(it->second);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  std::vector<const UserState*> reachable_users(const ScoringItem& item) const {
    std::vector<ConsumerId> ids;
    for (auto t : locate_trees(item)) {
      auto m = trees_[t].tree.members();
      ids.insert(ids.end(), m.begin(), m.end());
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    std::vector<const UserState*> out;
    out.reserve(ids.size());
    for (auto c : ids) out.push_back(&records_[record_of_.at(c)].state);
    return out;
  }

  PseudoQuery pseudo_query(const ScoringItem& item, std::uint32_t block) const {
    const auto& b = blocks_.at(block);
    PseudoQuery q;
    q.block = block;
    q.category = item.category;
    q.f_producer.assign(b.producers.size(), 0.0);
    q.f_entity.assign(b.entities.size(), 0.0);
    q.w_entity.assign(b.entities.size(), 0.0);
    if (auto s = b.producers.slot(item.producer.value)) q.f_producer[*s] = 1.0;
    for (const auto& x : item.entities) {
      if (auto s = b.entities.slot(x.entity.value)) {
        q.f_entity[*s] += 1.0;
        q.w_entity[*s] = std::max(q.w_entity[*s], x.weight);
      }
    }
    return q;
  }

  QueryPlan plan(const ScoringItem& item, std::uint32_t block) const {
    const auto& b = blocks_.at(block);
    QueryPlan p;
    p.block = block;
    p.producer_slot = b.producers.slot(item.producer.value);
    p.producer_bg = bg_.producer_prob(item.producer);
    std::unordered_map<std::uint32_t, double> wmax;
    for (const auto& x : item.entities) {
      auto& w = wmax[x.entity.value];
      w = std::max(w, x.weight);
    }
    for (const auto& x : item.entities)
      p.occurrences.push_back({b.entities.slot(x.entity.value), wmax[x.entity.value], bg_.entity_prob(x.entity)});
    return p;
  }

  /// Upper bound of any descendant's score. Built from the same smoothing
  /// expression and the same score assembly as exact scoring, with every
  /// term at least the corresponding leaf term, so it is monotone in
  /// floating point as well.
  double upper_bound(const QueryPlan& plan, const Signature& sig, double lambda_s) const {
    ScoringConfig sc = scoring_;
    sc.lambda_s = lambda_s;
    double pp = dirichlet_smoothed(0, sig.producer_total_min, sc.mu_producer, plan.producer_bg);
    if (plan.producer_slot) pp = std::max(pp, sparse_get(sig.producer_max, *plan.producer_slot));
    double pe = 0;
    for (const auto& o : plan.occurrences) {
      double v = dirichlet_smoothed(0, sig.entity_total_min, sc.mu_entity, o.bg);
      if (o.slot) v = std::max(v, sparse_get(sig.entity_max, *o.slot));
      pe += o.weight * v;
    }
    return assemble_score(sig.p_long, pp, pe, sig.p_short, sc);
  }

  double upper_bound(const QueryPlan& plan, const Signature& sig) const {
    return upper_bound(plan, sig, scoring_.lambda_s);
  }

  double leaf_score(const LEntry& e, const ScoringItem& item, double lambda_s) const {
    ScoringConfig sc = scoring_;
    sc.lambda_s = lambda_s;
    return combined_score(records_[e.record].state, item, bg_, sc);
  }

  /// Best-first search over the located trees with upper-bound pruning.
  /// Identical to brute_force_top_k over reachable_users(item).
  std::vector<ScoredUser> knn_query(const ScoringItem& item, std::size_t k, double lambda_s,
                                    QueryStats* stats = nullptr) const {
    if (k == 0) throw ConfigError("k must be >= 1");
    QueryStats local;
    QueryStats& st = stats ? *stats : local;
    st = {};
    const auto located = locate_trees(item);
    st.trees = located.size();
    std::unordered_map<std::uint32_t, QueryPlan> plans;
    for (auto t : located) {
      const auto b = trees_[t].block;
      if (!plans.count(b)) plans.emplace(b, plan(item, b));
    }

    struct Cand {
      double bound;
      std::uint32_t tree;
      std::uint32_t node;
    };
    auto cand_less = [](const Cand& a, const Cand& b) {
      if (a.bound != b.bound) return a.bound < b.bound;
      if (a.tree != b.tree) return a.tree > b.tree;
      return a.node > b.node;
    };
    std::priority_queue<Cand, std::vector<Cand>, decltype(cand_less)> queue(cand_less);
    std::vector<ScoredUser> heap;  // worst result on top
    std::unordered_set<std::uint32_t> offered;
    double lb = kNegInf;

    auto offer = [&](ScoredUser s) {
      if (heap.size() < k) {
        heap.push_back(s);
        std::push_heap(heap.begin(), heap.end(), ranks_before);
      } else if (ranks_before(s, heap.front())) {
        std::pop_heap(heap.begin(), heap.end(), ranks_before);
        heap.back() = s;
        std::push_heap(heap.begin(), heap.end(), ranks_before);
      }
      if (heap.size() == k) lb = heap.front().score;
    };
    auto expand = [&](std::uint32_t t, std::uint32_t n) {
      ++st.nodes_expanded;
      const auto& node = trees_[t].tree.node(n);
      if (node.leaf) {
        for (const auto& e : node.entries) {
          if (!offered.insert(e.consumer.value).second) continue;
          ++st.leaves_scored;
          offer({e.consumer, leaf_score(e, item, lambda_s)});
        }
        return;
      }
      const auto& qp = plans.at(trees_[t].block);
      for (std::size_t i = 0; i < node.children.size(); ++i) {
        ++st.entries_bounded;
        const double b = upper_bound(qp, node.child_sigs[i], lambda_s);
        // Strict: an entry whose bound ties the k-th score may still win the
        // id tie-break.
        if (heap.size() == k && b < lb) {
          ++st.pruned;
          continue;
        }
        queue.push({b, t, node.children[i]});
      }
    };

    for (auto t : located) expand(t, trees_[t].tree.root());
    while (!queue.empty()) {
      const auto top = queue.top();
      if (heap.size() == k && top.bound < lb) {
        st.pruned += queue.size();
        break;
      }
      queue.pop();
      expand(top.tree, top.node);
    }
    std::sort(heap.begin(), heap.end(), ranks_before);
    return heap;
  }

  std::vector<ScoredUser> knn_query(const ScoringItem& item, std::size_t k, QueryStats* stats = nullptr) const {
    return knn_query(item, k, scoring_.lambda_s, stats);
  }

  // --- maintenance ---------------------------------------------------------

  /// Applies new interactions. Models stay frozen; category predictions,
  /// counts, vocabularies, hash links and signatures are brought up to date.
  UpdateReport apply_updates(std::span<const UpdateEvent> events, const ModelBundle& models) {
    UpdateReport rep;
    std::map<ConsumerId, std::vector<const ProfileEvent*>> by_user;
    for (const auto& u : events) {
      if (u.event.category.value >= n_categories_)
        throw DataError("update refers to category " + std::to_string(u.event.category.value) +
                        " outside the trained category set");
      by_user[u.consumer].push_back(&u.event);
    }
    std::set<std::uint32_t> rebuild;
    for (const auto& [consumer, evs] : by_user) {
      auto it = record_of_.find(consumer);
      const bool fresh = it == record_of_.end();
      UserProfile profile = fresh ? UserProfile(consumer, window_capacity_) : records_[it->second].state.profile;
      for (const auto* ev : evs) profile.observe(*ev);
      UserState state = make_user_state(std::move(profile), models, scoring_.floor);

      std::uint32_t rec = 0;
      if (fresh) {
        const auto b = assigner_.assign(interest_vector(state.profile, n_categories_));
        if (b >= blocks_.size()) {
          UserBlock blk;
          blk.id = b;
          blocks_.push_back(std::move(blk));
          ++rep.new_blocks;
        }
        rec = static_cast<std::uint32_t>(records_.size());
        records_.push_back(UserRecord{std::move(state), b, nullptr});
        record_of_[consumer] = rec;
        blocks_[b].members.push_back(consumer);
        ++rep.new_users;
      } else {
        rec = it->second;
        records_[rec].state = std::move(state);
      }
      auto& r = records_[rec];
      auto& blk = blocks_[r.block];
      const auto before_p = blk.producers.size();
      const auto before_e = blk.entities.size();
      for (const auto* ev : evs) add_event_vocab(blk, *ev);
      rep.reserve_slots_used += (blk.producers.size() - before_p) + (blk.entities.size() - before_e);
      if (blk.producers.overflowing() || blk.entities.overflowing()) rebuild.insert(blk.id);

      refresh_impacts(r);
      for (auto c : r.state.profile.categories()) {
        const auto t = ensure_tree(blk.id, c);
        auto entry = make_entry(rec, c);
        auto& tree = trees_[t].tree;
        if (!tree.update(entry)) tree.insert(std::move(entry));
      }
      for (const auto* ev : evs) {
        const auto t = *tree_of(r.block, ev->category);
        for (auto e : ev->entities)
          if (hash_.link(phrase(ev->category, e), ev->category, e, t)) ++rep.new_hash_links;
      }
      ++rep.profiles_updated;
    }
    for (auto b : rebuild) {
      blocks_[b].producers.reset_capacity(cfg_.reserve);
      blocks_[b].entities.reset_capacity(cfg_.reserve);
      build_block_trees(b);
      rep.rebuilt_blocks.push_back(b);
    }
    return rep;
  }

  // --- integrity -----------------------------------------------------------

  /// Replays every structural invariant; throws IntegrityError on failure.
  void verify() const {
    auto fail = [](const std::string& why) { throw IntegrityError(why); };
    if (record_of_.size() != records_.size()) fail("user map and records disagree");
    for (std::uint32_t i = 0; i < records_.size(); ++i) {
      const auto& r = records_[i];
      if (record_of_.at(r.state.consumer) != i) fail("user map points at the wrong record");
      if (r.block >= blocks_.size()) fail("record refers to a missing block");
      if (!r.state.profile.long_term.consistent()) fail("long-term counts inconsistent");
      if (r.state.profile.short_term.size() > r.state.profile.short_term.capacity()) fail("window over capacity");
      if (!r.impacts || !(*r.impacts == compute_impacts(r))) fail("impact lists out of date");
    }
    for (const auto& b : blocks_) {
      if (b.producers.size() > b.producers.capacity() || b.entities.size() > b.entities.capacity())
        fail("block " + std::to_string(b.id) + " vocabulary exceeds its capacity");
      std::map<CategoryId, std::size_t> expected;
      std::set<std::uint64_t> pairs;
      for (auto m : b.members) {
        const auto& r = records_[record_of_.at(m)];
        if (r.block != b.id) fail("member assigned to another block");
        for (auto c : r.state.profile.categories()) ++expected[c];
        for (const auto* ev : r.state.profile.history()) {
          if (!b.producers.slot(ev->producer.value)) fail("producer missing from block vocabulary");
          for (auto e : ev->entities) {
            if (!b.entities.slot(e.value)) fail("entity missing from block vocabulary");
            pairs.insert((static_cast<std::uint64_t>(ev->category.value) << 32) | e.value);
          }
        }
      }
      for (const auto& [c, n] : expected) {
        auto t = tree_of(b.id, c);
        if (!t) fail("missing tree for a member category");
        if (trees_[*t].tree.size() != n) fail("tree population differs from block members");
      }
      for (auto key : pairs) {
        const CategoryId c(static_cast<std::uint32_t>(key >> 32));
        const EntityId e(static_cast<std::uint32_t>(key & 0xffffffffULL));
        const auto* triad = hash_.find(phrase(c, e), c, e);
        const auto t = tree_of(b.id, c);
        if (!triad || !t || !std::binary_search(triad->trees.begin(), triad->trees.end(), *t))
          fail("pair " + phrase(c, e) + " not reachable through the hash table");
      }
    }
    for (std::uint32_t t = 0; t < trees_.size(); ++t) {
      const auto& ti = trees_[t];
      const auto label = std::to_string(ti.block) + "/" + std::to_string(ti.category.value);
      ti.tree.verify(label);
      if (tree_of(ti.block, ti.category) != t) fail("tree " + label + " not registered with its block");
      for (const auto& n : ti.tree.nodes()) {
        if (!n.leaf) continue;
        for (const auto& e : n.entries) {
          if (e.record >= records_.size() || records_[e.record].state.consumer != e.consumer)
            fail("tree " + label + " entry points at the wrong record");
          if (!(e == make_entry(e.record, ti.category))) fail("tree " + label + " entry is stale");
        }
      }
    }
    const auto& buckets = hash_.buckets();
    std::size_t chained = 0;
    for (std::size_t b = 0; b < buckets.size(); ++b) {
      for (auto i = buckets[b]; i >= 0; i = hash_.triads()[static_cast<std::size_t>(i)].next) {
        const auto& tr = hash_.triads()[static_cast<std::size_t>(i)];
        if (++chained > hash_.size()) fail("hash chain cycle");
        const auto ph = phrase(tr.category, tr.entity);
        if (hash_.key_of(ph) != tr.key || hash_.bucket_of(ph) != b) fail("hash triad in the wrong bucket");
        if (tr.trees.size() > blocks_.size()) fail("triad has more links than blocks");
        for (auto t : tr.trees)
          if (t >= trees_.size() || trees_[t].category != tr.category) fail("triad links a foreign tree");
      }
    }
    if (chained != hash_.size()) fail("orphaned hash triads");
  }

  // Snapshot support: raw restore of every part.
  struct Parts {
    IndexConfig cfg;
    ScoringConfig scoring;
    Vocabularies vocab;
    BackgroundModel bg;
    std::size_t n_categories = 0;
    std::size_t window_capacity = 5;
    std::vector<UserRecord> records;
    std::vector<UserBlock> blocks;
    std::vector<std::vector<double>> centroid_sums;
    std::vector<TreeInfo> trees;
    std::vector<std::int32_t> buckets;
    std::vector<HashTriad> triads;
  };

  static CppseIndex restore(Parts p) {
    CppseIndex ix;
    ix.cfg_ = p.cfg;
    ix.scoring_ = p.scoring;
    ix.vocab_ = std::move(p.vocab);
    ix.bg_ = std::move(p.bg);
    ix.n_categories_ = p.n_categories;
    ix.window_capacity_ = p.window_capacity;
    ix.records_ = std::move(p.records);
    for (std::uint32_t i = 0; i < ix.records_.size(); ++i) ix.record_of_[ix.records_[i].state.consumer] = i;
    ix.blocks_ = std::move(p.blocks);
    ix.assigner_ = BlockAssigner(p.n_categories, p.cfg.block_threshold);
    ix.assigner_.restore(std::move(p.centroid_sums));
    ix.trees_ = std::move(p.trees);
    ix.hash_ = ChainedHashTable(p.cfg.hash);
    ix.hash_.restore(std::move(p.buckets), std::move(p.triads));
    // Trees share impact lists with their records.
    for (auto& ti : ix.trees_) {
      std::vector<TreeNode> nodes = ti.tree.nodes();
      for (auto& n : nodes)
        for (auto& e : n.entries)
          if (e.record < ix.records_.size()) e.impacts = ix.records_[e.record].impacts;
      const auto root = ti.tree.root();
      ti.tree.restore(root, std::move(nodes));
    }
    return ix;
  }

 private:
  static void add_event_vocab(UserBlock& blk, const ProfileEvent& ev) {
    blk.producers.add(ev.producer.value);
    for (auto e : ev.entities) blk.entities.add(e.value);
  }

  Impacts compute_impacts(const UserRecord& r) const {
    const auto& blk = blocks_[r.block];
    const auto& lt = r.state.profile.long_term;
    Impacts im;
    for (const auto& [p, n] : lt.producer_counts()) {
      auto s = blk.producers.slot(p.value);
      if (!s) throw IntegrityError("producer outside block vocabulary");
      im.producer.emplace_back(*s, dirichlet_smoothed(n, lt.total_producers(), scoring_.mu_producer,
                                                      bg_.producer_prob(p)));
    }
    for (const auto& [e, n] : lt.entity_counts()) {
      auto s = blk.entities.slot(e.value);
      if (!s) throw IntegrityError("entity outside block vocabulary");
      im.entity.emplace_back(*s, dirichlet_smoothed(n, lt.total_entities(), scoring_.mu_entity, bg_.entity_prob(e)));
    }
    std::sort(im.producer.begin(), im.producer.end());
    std::sort(im.entity.begin(), im.entity.end());
    return im;
  }

  void refresh_impacts(UserRecord& r) { r.impacts = std::make_shared<const Impacts>(compute_impacts(r)); }

  LEntry make_entry(std::uint32_t rec, CategoryId c) const {
    const auto& r = records_[rec];
    const auto& lt = r.state.profile.long_term;
    LEntry e;
    e.consumer = r.state.consumer;
    e.record = rec;
    e.p_long = category_prob(r.state.p_long, c);
    e.p_short = category_prob(r.state.p_short, c);
    e.producer_total = lt.total_producers();
    e.entity_total = lt.total_entities();
    e.impacts = r.impacts;
    return e;
  }

  std::uint32_t ensure_tree(std::uint32_t block, CategoryId c) {
    auto& blk = blocks_[block];
    if (auto it = blk.trees.find(c); it != blk.trees.end()) return it->second;
    const auto t = static_cast<std::uint32_t>(trees_.size());
    trees_.push_back(TreeInfo{block, c, SignatureTree(cfg_.fanout)});
    blk.trees.emplace(c, t);
    blk.categories.insert(c);
    return t;
  }

  /// Bulk-loads every tree of a block from its members and links all of the
  /// members' (category, entity) pairs.
  void build_block_trees(std::uint32_t block) {
    std::map<CategoryId, std::vector<LEntry>> per_cat;
    std::set<std::uint64_t> pairs;
    for (auto m : blocks_[block].members) {
      const auto rec = record_of_.at(m);
      const auto& prof = records_[rec].state.profile;
      for (auto c : prof.categories()) per_cat[c].push_back(make_entry(rec, c));
      for (const auto* ev : prof.history())
        for (auto e : ev->entities) pairs.insert((static_cast<std::uint64_t>(ev->category.value) << 32) | e.value);
    }
    for (auto& [c, entries] : per_cat) {
      const auto t = ensure_tree(block, c);
      trees_[t].tree.bulk_load(std::move(entries));
    }
    for (auto key : pairs) {
      const CategoryId c(static_cast<std::uint32_t>(key >> 32));
      const EntityId e(static_cast<std::uint32_t>(key & 0xffffffffULL));
      hash_.link(phrase(c, e), c, e, *tree_of(block, c));
    }
  }

  IndexConfig cfg_;
  ScoringConfig scoring_;
  Vocabularies vocab_;
  BackgroundModel bg_;
  std::size_t n_categories_ = 0;
  std::size_t window_capacity_ = 5;
  std::vector<UserRecord> records_;
  std::unordered_map<ConsumerId, std::uint32_t> record_of_;
  std::vector<UserBlock> blocks_;
  BlockAssigner assigner_{0, 0.6};
  std::vector<TreeInfo> trees_;
  ChainedHashTable hash_;
};

inline CppseIndex build_index(const UserStates& states, const Vocabularies& vocab, const BackgroundModel& bg,
                              const ScoringConfig& scoring, const IndexConfig& cfg, std::size_t n_categories,
                              std::size_t window_capacity,
                              const std::vector<std::vector<ConsumerId>>* blocks = nullptr) {
  return CppseIndex::build(states, vocab, bg, scoring, cfg, n_categories, window_capacity, blocks);
}

/// Free-function form of the pseudo-query for one block.
inline PseudoQuery gen_pseudo_query(const CppseIndex& index, const ScoringItem& item, std::uint32_t block) {
  return index.pseudo_query(item, block);
}

}  // namespace ssrec

#endif  // SSREC_CPPSE_INDEX_HPP
