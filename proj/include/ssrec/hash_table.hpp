#ifndef SSREC_HASH_TABLE_HPP
#define SSREC_HASH_TABLE_HPP

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ssrec/types.hpp"

namespace ssrec {

struct HashParams {
  std::uint64_t seed = 31;
  unsigned shift_left = 5;
  unsigned shift_right = 2;
  std::uint64_t table_size = std::uint64_t{1} << 17;

  void validate() const {
    if (table_size == 0) throw ConfigError("hash table size must be >= 1");
    if (table_size > (std::uint64_t{1} << 31)) throw ConfigError("hash table size too large");
    if (shift_left == 0 || shift_left >= 64 || shift_right == 0 || shift_right >= 64)
      throw ConfigError("hash shifts must be in [1, 63]");
  }
};

/// h = seed; for each byte c: h ^= (h << L) + (h >> R) + c, in 64-bit
/// wraparound arithmetic.
inline std::uint64_t shift_add_xor(std::string_view phrase, std::uint64_t seed, unsigned L, unsigned R) {
  std::uint64_t h = seed;
  for (unsigned char c : phrase) h ^= (h << L) + (h >> R) + static_cast<std::uint64_t>(c);
  return h;
}

inline std::uint64_t shift_add_xor_hash(std::string_view phrase, std::uint64_t seed, unsigned L, unsigned R,
                                        std::uint64_t table_size) {
  if (table_size == 0) throw ConfigError("hash table size must be >= 1");
  return shift_add_xor(phrase, seed, L, R) % table_size;
}

/// Bucket entry <key, tree links, next>.
struct HashTriad {
  std::uint64_t key = 0;  // full 64-bit hash of the phrase
  CategoryId category;
  EntityId entity;
  std::vector<std::uint32_t> trees;  // sorted tree ids
  std::int32_t next = -1;

  friend bool operator==(const HashTriad&, const HashTriad&) = default;
};

/// Chained hash table from category-entity phrases to signature trees.
class ChainedHashTable {
 public:
  explicit ChainedHashTable(HashParams params = {}) : params_(params) {
    params_.validate();
    buckets_.assign(params_.table_size, -1);
  }

  const HashParams& params() const { return params_; }
  std::uint64_t key_of(std::string_view phrase) const {
    return shift_add_xor(phrase, params_.seed, params_.shift_left, params_.shift_right);
  }
  std::uint64_t bucket_of(std::string_view phrase) const { return key_of(phrase) % params_.table_size; }

  const HashTriad* find(std::string_view phrase, CategoryId c, EntityId e) const {
    const auto key = key_of(phrase);
    for (auto i = buckets_[key % params_.table_size]; i >= 0; i = pool_[static_cast<std::size_t>(i)].next) {
      const auto& t = pool_[static_cast<std::size_t>(i)];
      if (t.key == key && t.category == c && t.entity == e) return &t;
    }
    return nullptr;
  }

  /// Adds a link from the pair to a tree; returns true if the link is new.
  bool link(std::string_view phrase, CategoryId c, EntityId e, std::uint32_t tree) {
    auto& t = pool_[locate_or_insert(phrase, c, e)];
    auto pos = std::lower_bound(t.trees.begin(), t.trees.end(), tree);
    if (pos != t.trees.end() && *pos == tree) return false;
    t.trees.insert(pos, tree);
    return true;
  }

  std::size_t size() const { return pool_.size(); }
  const std::vector<std::int32_t>& buckets() const { return buckets_; }
  const std::vector<HashTriad>& triads() const { return pool_; }

  /// Direct restore from a snapshot.
  void restore(std::vector<std::int32_t> buckets, std::vector<HashTriad> pool) {
    if (buckets.size() != params_.table_size) throw IntegrityError("hash table bucket count mismatch");
    buckets_ = std::move(buckets);
    pool_ = std::move(pool);
  }

  friend bool operator==(const ChainedHashTable& a, const ChainedHashTable& b) {
    return a.buckets_ == b.buckets_ && a.pool_ == b.pool_;
  }

 private:
  std::size_t locate_or_insert(std::string_view phrase, CategoryId c, EntityId e) {
    const auto key = key_of(phrase);
    auto& head = buckets_[key % params_.table_size];
    for (auto i = head; i >= 0; i = pool_[static_cast<std::size_t>(i)].next) {
      const auto& t = pool_[static_cast<std::size_t>(i)];
      if (t.key == key && t.category == c && t.entity == e) return static_cast<std::size_t>(i);
    }
    HashTriad t;
    t.key = key;
    t.category = c;
    t.entity = e;
    t.next = head;
    pool_.push_back(std::move(t));
    head = static_cast<std::int32_t>(pool_.size() - 1);
    return pool_.size() - 1;
  }

  HashParams params_;
  std::vector<std::int32_t> buckets_;
  std::vector<HashTriad> pool_;
};

}  // namespace ssrec

#endif  // SSREC_HASH_TABLE_HPP
