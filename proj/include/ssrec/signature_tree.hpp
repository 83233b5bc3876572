#ifndef SSREC_SIGNATURE_TREE_HPP
#define SSREC_SIGNATURE_TREE_HPP

#include <algorithm>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ssrec/types.hpp"

namespace ssrec {

/// Sparse impact list: (slot, value) sorted by slot. Absent slots hold no
/// explicit value.
using SparseVec = std::vector<std::pair<std::uint32_t, double>>;

inline double sparse_get(const SparseVec& v, std::uint32_t slot) {
  auto it = std::lower_bound(v.begin(), v.end(), slot,
                             [](const std::pair<std::uint32_t, double>& p, std::uint32_t s) { return p.first < s; });
  return (it != v.end() && it->first == slot) ? it->second : 0.0;
}

/// acc = component-wise max(acc, other).
inline void sparse_max_into(SparseVec& acc, const SparseVec& other) {
  if (other.empty()) return;
  if (acc.empty()) {
    acc = other;
    return;
  }
  SparseVec out;
  out.reserve(acc.size() + other.size());
  std::size_t i = 0, j = 0;
  while (i < acc.size() || j < other.size()) {
    if (j == other.size() || (i < acc.size() && acc[i].first < other[j].first)) {
      out.push_back(acc[i++]);
    } else if (i == acc.size() || other[j].first < acc[i].first) {
      out.push_back(other[j++]);
    } else {
      out.emplace_back(acc[i].first, std::max(acc[i].second, other[j].second));
      ++i;
      ++j;
    }
  }
  acc.swap(out);
}

/// Smoothed long-term producer and entity probabilities of one user, keyed
/// by block vocabulary slot. Only slots with a positive count are explicit.
struct Impacts {
  SparseVec producer;
  SparseVec entity;

  friend bool operator==(const Impacts&, const Impacts&) = default;
};

/// Leaf entry: one consumer inside one (block, category) tree.
struct LEntry {
  ConsumerId consumer;
  std::uint32_t record = 0;  // index of the owning user record
  double p_long = 0;
  double p_short = 0;
  std::uint32_t producer_total = 0;  // |U^p|
  std::uint32_t entity_total = 0;    // |E|
  std::shared_ptr<const Impacts> impacts;

  friend bool operator==(const LEntry& a, const LEntry& b) {
    return a.consumer == b.consumer && a.record == b.record && a.p_long == b.p_long && a.p_short == b.p_short &&
           a.producer_total == b.producer_total && a.entity_total == b.entity_total &&
           (a.impacts == b.impacts || (a.impacts && b.impacts && *a.impacts == *b.impacts));
  }
};

/// IEntry signature: component-wise max of the children, plus the minimum
/// history totals (smaller totals mean larger smoothed background mass).
struct Signature {
  double p_long = 0;
  double p_short = 0;
  std::uint32_t producer_total_min = std::numeric_limits<std::uint32_t>::max();
  std::uint32_t entity_total_min = std::numeric_limits<std::uint32_t>::max();
  SparseVec producer_max;
  SparseVec entity_max;

  static Signature of(const LEntry& e) {
    Signature s;
    s.p_long = e.p_long;
    s.p_short = e.p_short;
    s.producer_total_min = e.producer_total;
    s.entity_total_min = e.entity_total;
    if (e.impacts) {
      s.producer_max = e.impacts->producer;
      s.entity_max = e.impacts->entity;
    }
    return s;
  }

  void absorb(const Signature& o) {
    p_long = std::max(p_long, o.p_long);
    p_short = std::max(p_short, o.p_short);
    producer_total_min = std::min(producer_total_min, o.producer_total_min);
    entity_total_min = std::min(entity_total_min, o.entity_total_min);
    sparse_max_into(producer_max, o.producer_max);
    sparse_max_into(entity_max, o.entity_max);
  }

  double magnitude() const {
    double m = p_long + p_short;
    for (const auto& [s, v] : producer_max) m += v;
    for (const auto& [s, v] : entity_max) m += v;
    return m;
  }

  /// How much the maxima grow if o is absorbed.
  double enlargement(const Signature& o) const {
    double d = std::max(0.0, o.p_long - p_long) + std::max(0.0, o.p_short - p_short);
    for (const auto& [s, v] : o.producer_max) d += std::max(0.0, v - sparse_get(producer_max, s));
    for (const auto& [s, v] : o.entity_max) d += std::max(0.0, v - sparse_get(entity_max, s));
    return d;
  }

  friend bool operator==(const Signature&, const Signature&) = default;
};

struct TreeNode {
  bool leaf = true;
  std::int32_t parent = -1;
  std::vector<LEntry> entries;          // leaf only
  std::vector<std::uint32_t> children;  // internal only
  std::vector<Signature> child_sigs;    // IEntries, aligned with children

  std::size_t occupancy() const { return leaf ? entries.size() : children.size(); }

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

/// Extended signature tree over the LEntries of one (block, category).
class SignatureTree {
 public:
  explicit SignatureTree(std::size_t fanout = 16) : fanout_(fanout) {
    if (fanout_ < 2) throw ConfigError("tree fanout must be >= 2");
    nodes_.emplace_back();
  }

  std::size_t fanout() const { return fanout_; }
  std::uint32_t root() const { return root_; }
  const TreeNode& node(std::uint32_t i) const { return nodes_.at(i); }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::size_t size() const { return leaf_of_.size(); }
  bool empty() const { return leaf_of_.empty(); }
  bool contains(ConsumerId c) const { return leaf_of_.count(c) != 0; }

  std::size_t height() const {
    std::size_t h = 1;
    for (auto n = root_; !nodes_[n].leaf; n = nodes_[n].children.front()) ++h;
    return h;
  }

  /// Packs entries bottom-up after sorting by p_long desc (ties by consumer).
  void bulk_load(std::vector<LEntry> entries) {
    nodes_.clear();
    leaf_of_.clear();
    std::sort(entries.begin(), entries.end(), [](const LEntry& a, const LEntry& b) {
      if (a.p_long != b.p_long) return a.p_long > b.p_long;
      return a.consumer < b.consumer;
    });
    std::vector<std::uint32_t> level;
    for (std::size_t i = 0; i < entries.size(); i += fanout_) {
      TreeNode leaf;
      const auto end = std::min(entries.size(), i + fanout_);
      for (std::size_t j = i; j < end; ++j) leaf.entries.push_back(std::move(entries[j]));
      const auto id = static_cast<std::uint32_t>(nodes_.size());
      for (const auto& e : leaf.entries) leaf_of_[e.consumer] = id;
      nodes_.push_back(std::move(leaf));
      level.push_back(id);
    }
    if (level.empty()) {
      nodes_.emplace_back();
      root_ = 0;
      return;
    }
    while (level.size() > 1) {
      std::vector<std::uint32_t> next;
      for (std::size_t i = 0; i < level.size(); i += fanout_) {
        TreeNode inner;
        inner.leaf = false;
        const auto id = static_cast<std::uint32_t>(nodes_.size());
        const auto end = std::min(level.size(), i + fanout_);
        for (std::size_t j = i; j < end; ++j) {
          inner.children.push_back(level[j]);
          inner.child_sigs.push_back(node_signature(level[j]));
        }
        nodes_.push_back(std::move(inner));
        for (auto c : nodes_[id].children) nodes_[c].parent = static_cast<std::int32_t>(id);
        next.push_back(id);
      }
      level.swap(next);
    }
    root_ = level.front();
  }

  /// Replaces the consumer's entry and refreshes ancestor maxima. Returns
  /// false if the consumer is not in the tree.
  bool update(const LEntry& e) {
    auto it = leaf_of_.find(e.consumer);
    if (it == leaf_of_.end()) return false;
    auto& leaf = nodes_[it->second];
    for (auto& x : leaf.entries) {
      if (x.consumer == e.consumer) {
        x = e;
        break;
      }
    }
    refresh_upward(it->second);
    return true;
  }

  /// Inserts a new consumer: least-enlargement descent, split on overflow.
  void insert(LEntry e) {
    if (contains(e.consumer)) throw IntegrityError("consumer already present in tree");
    const auto sig = Signature::of(e);
    auto n = root_;
    while (!nodes_[n].leaf) {
      const auto& node = nodes_[n];
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < node.children.size(); ++i) {
        const double d = node.child_sigs[i].enlargement(sig);
        if (d < best_d) {
          best_d = d;
          best = i;
        }
      }
      n = node.children[best];
    }
    leaf_of_[e.consumer] = n;
    nodes_[n].entries.push_back(std::move(e));
    if (nodes_[n].entries.size() > fanout_) {
      split(n);
    } else {
      refresh_upward(n);
    }
  }

  /// Max over the node's entries (leaf) or child signatures (internal).
  Signature node_signature(std::uint32_t n) const {
    const auto& node = nodes_[n];
    Signature s;
    bool first = true;
    auto take = [&](const Signature& o) {
      if (first) {
        s = o;
        first = false;
      } else {
        s.absorb(o);
      }
    };
    if (node.leaf) {
      for (const auto& e : node.entries) take(Signature::of(e));
    } else {
      for (const auto& c : node.child_sigs) take(c);
    }
    return s;
  }

  std::vector<ConsumerId> members() const {
    std::vector<ConsumerId> out;
    out.reserve(leaf_of_.size());
    for (const auto& n : nodes_)
      if (n.leaf)
        for (const auto& e : n.entries) out.push_back(e.consumer);
    std::sort(out.begin(), out.end());
    return out;
  }

  const LEntry* find(ConsumerId c) const {
    auto it = leaf_of_.find(c);
    if (it == leaf_of_.end()) return nullptr;
    for (const auto& e : nodes_[it->second].entries)
      if (e.consumer == c) return &e;
    return nullptr;
  }

  /// Throws IntegrityError on any structural or signature violation.
  void verify(const std::string& label) const {
    auto fail = [&](const std::string& why) { throw IntegrityError("tree " + label + ": " + why); };
    // Normalized distributions may overshoot 1 by rounding.
    auto in_unit = [](double v) { return v >= 0 && v <= 1 + 1e-9; };
    if (nodes_[root_].parent != -1) fail("root has a parent");
    std::size_t seen = 0;
    std::size_t leaf_depth = 0;
    std::vector<std::pair<std::uint32_t, std::size_t>> stack{{root_, 1}};
    std::vector<char> visited(nodes_.size(), 0);
    while (!stack.empty()) {
      auto [n, depth] = stack.back();
      stack.pop_back();
      if (visited[n]) fail("node reachable twice");
      visited[n] = 1;
      const auto& node = nodes_[n];
      if (node.occupancy() > fanout_) fail("node over capacity");
      if (n != root_ && node.occupancy() == 0) fail("empty non-root node");
      if (node.leaf) {
        if (leaf_depth == 0) leaf_depth = depth;
        if (leaf_depth != depth) fail("leaves at different depths");
        for (const auto& e : node.entries) {
          auto it = leaf_of_.find(e.consumer);
          if (it == leaf_of_.end() || it->second != n) fail("leaf map out of sync");
          if (!in_unit(e.p_long) || !in_unit(e.p_short)) fail("p outside [0,1]");
          if (e.impacts) {
            for (const auto& [s, v] : e.impacts->producer)
              if (!in_unit(v)) fail("impact outside [0,1]");
            for (const auto& [s, v] : e.impacts->entity)
              if (!in_unit(v)) fail("impact outside [0,1]");
          }
          ++seen;
        }
      } else {
        if (node.children.size() != node.child_sigs.size()) fail("children and signatures misaligned");
        for (std::size_t i = 0; i < node.children.size(); ++i) {
          const auto c = node.children[i];
          if (c >= nodes_.size()) fail("dangling child");
          if (nodes_[c].parent != static_cast<std::int32_t>(n)) fail("parent link broken");
          if (!(node.child_sigs[i] == node_signature(c))) fail("IEntry is not the exact max of its children");
          stack.emplace_back(c, depth + 1);
        }
      }
    }
    if (seen != leaf_of_.size()) fail("entry count does not match leaf map");
  }

  /// Restores raw structure from a snapshot and rebuilds the leaf map.
  void restore(std::uint32_t root, std::vector<TreeNode> nodes) {
    if (nodes.empty() || root >= nodes.size()) throw IntegrityError("tree snapshot has no valid root");
    nodes_ = std::move(nodes);
    root_ = root;
    leaf_of_.clear();
    for (std::uint32_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].leaf)
        for (const auto& e : nodes_[i].entries) leaf_of_[e.consumer] = i;
  }

 private:
  void refresh_upward(std::uint32_t n) {
    while (nodes_[n].parent >= 0) {
      const auto p = static_cast<std::uint32_t>(nodes_[n].parent);
      auto& parent = nodes_[p];
      const auto pos = static_cast<std::size_t>(
          std::find(parent.children.begin(), parent.children.end(), n) - parent.children.begin());
      parent.child_sigs[pos] = node_signature(n);
      n = p;
    }
  }

  /// Quadratic-style 2-way split: seeds are the pair whose merge wastes the
  /// most, the rest go where the enlargement is smallest.
  static std::pair<std::vector<std::size_t>, std::vector<std::size_t>> partition(const std::vector<Signature>& sigs,
                                                                               std::size_t min_fill) {
    const std::size_t n = sigs.size();
    std::size_t s1 = 0, s2 = 1;
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        Signature m = sigs[i];
        m.absorb(sigs[j]);
        const double waste = m.magnitude() - sigs[i].magnitude() - sigs[j].magnitude();
        if (waste > worst) {
          worst = waste;
          s1 = i;
          s2 = j;
        }
      }
    }
    std::vector<std::size_t> g1{s1}, g2{s2};
    Signature m1 = sigs[s1], m2 = sigs[s2];
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < n; ++i)
      if (i != s1 && i != s2) rest.push_back(i);
    for (std::size_t r = 0; r < rest.size(); ++r) {
      const auto i = rest[r];
      const std::size_t left = rest.size() - r;
      bool to_first;
      if (g1.size() + left <= min_fill) {
        to_first = true;
      } else if (g2.size() + left <= min_fill) {
        to_first = false;
      } else {
        const double d1 = m1.enlargement(sigs[i]);
        const double d2 = m2.enlargement(sigs[i]);
        to_first = d1 < d2 || (d1 == d2 && g1.size() <= g2.size());
      }
      if (to_first) {
        g1.push_back(i);
        m1.absorb(sigs[i]);
      } else {
        g2.push_back(i);
        m2.absorb(sigs[i]);
      }
    }
    return {g1, g2};
  }

  void split(std::uint32_t n) {
    const std::size_t min_fill = std::max<std::size_t>(1, fanout_ / 3);
    const auto fresh = static_cast<std::uint32_t>(nodes_.size());
    nodes_.emplace_back();
    auto& a = nodes_[n];
    auto& b = nodes_[fresh];
    b.leaf = a.leaf;
    if (a.leaf) {
      std::vector<Signature> sigs;
      for (const auto& e : a.entries) sigs.push_back(Signature::of(e));
      auto [g1, g2] = partition(sigs, min_fill);
      std::vector<LEntry> keep;
      for (auto i : g1) keep.push_back(std::move(a.entries[i]));
      for (auto i : g2) {
        leaf_of_[a.entries[i].consumer] = fresh;
        b.entries.push_back(std::move(a.entries[i]));
      }
      a.entries = std::move(keep);
    } else {
      auto [g1, g2] = partition(a.child_sigs, min_fill);
      std::vector<std::uint32_t> kc;
      std::vector<Signature> ks;
      for (auto i : g1) {
        kc.push_back(a.children[i]);
        ks.push_back(std::move(a.child_sigs[i]));
      }
      for (auto i : g2) {
        b.children.push_back(a.children[i]);
        b.child_sigs.push_back(std::move(a.child_sigs[i]));
      }
      a.children = std::move(kc);
      a.child_sigs = std::move(ks);
      for (auto c : nodes_[fresh].children) nodes_[c].parent = static_cast<std::int32_t>(fresh);
    }
    if (nodes_[n].parent < 0) {
      const auto r = static_cast<std::uint32_t>(nodes_.size());
      TreeNode root;
      root.leaf = false;
      root.children = {n, fresh};
      root.child_sigs = {node_signature(n), node_signature(fresh)};
      nodes_.push_back(std::move(root));
      nodes_[n].parent = static_cast<std::int32_t>(r);
      nodes_[fresh].parent = static_cast<std::int32_t>(r);
      root_ = r;
      return;
    }
    const auto p = static_cast<std::uint32_t>(nodes_[n].parent);
    nodes_[fresh].parent = static_cast<std::int32_t>(p);
    auto& parent = nodes_[p];
    const auto pos = static_cast<std::size_t>(
        std::find(parent.children.begin(), parent.children.end(), n) - parent.children.begin());
    parent.child_sigs[pos] = node_signature(n);
    parent.children.insert(parent.children.begin() + static_cast<std::ptrdiff_t>(pos + 1), fresh);
    parent.child_sigs.insert(parent.child_sigs.begin() + static_cast<std::ptrdiff_t>(pos + 1),
                             node_signature(fresh));
    if (parent.children.size() > fanout_) {
      split(p);
    } else {
      refresh_upward(p);
    }
  }

  std::size_t fanout_;
  std::vector<TreeNode> nodes_;
  std::uint32_t root_ = 0;
  std::unordered_map<ConsumerId, std::uint32_t> leaf_of_;
};

}  // namespace ssrec

#endif  // SSREC_SIGNATURE_TREE_HPP
