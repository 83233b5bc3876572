#include <gtest/gtest.h>

#include "ssrec/hash_table.hpp"

namespace ssrec {
namespace {

TEST(ShiftAddXor, GoldenValues) {
  // One character by hand: 31 ^ ((31 << 5) + (31 >> 2) + 'a') = 31 ^ 1096 = 1111.
  EXPECT_EQ(shift_add_xor("a", 31, 5, 2), 1111u);
  // Traced character by character outside this library.
  EXPECT_EQ(shift_add_xor("sports#Beckham", 31, 5, 2), 1763633711287303461ULL);
  EXPECT_EQ(shift_add_xor_hash("sports#Beckham", 31, 5, 2, 1024), 293u);
}

TEST(ShiftAddXor, EmptyPhraseIsSeedModT) { EXPECT_EQ(shift_add_xor_hash("", 7, 5, 2, 5), 2u); }

TEST(ShiftAddXor, Deterministic) {
  EXPECT_EQ(shift_add_xor_hash("music#Adele", 31, 5, 2, 1 << 17), shift_add_xor_hash("music#Adele", 31, 5, 2, 1 << 17));
  EXPECT_THROW(shift_add_xor_hash("x", 31, 5, 2, 0), ConfigError);
}

TEST(ChainedTable, LinksAreSortedAndDeduplicated) {
  ChainedHashTable t(HashParams{31, 5, 2, 8});
  EXPECT_TRUE(t.link("sports#Beckham", CategoryId(0), EntityId(0), 2));
  EXPECT_TRUE(t.link("sports#Beckham", CategoryId(0), EntityId(0), 0));
  EXPECT_FALSE(t.link("sports#Beckham", CategoryId(0), EntityId(0), 2));
  const auto* tr = t.find("sports#Beckham", CategoryId(0), EntityId(0));
  ASSERT_NE(tr, nullptr);
  EXPECT_EQ(tr->trees, (std::vector<std::uint32_t>{0, 2}));
  EXPECT_EQ(t.size(), 1u);
}

TEST(ChainedTable, CollidingPhrasesChainInOneBucket) {
  // T = 1 forces every phrase into the same bucket.
  ChainedHashTable t(HashParams{31, 5, 2, 1});
  for (std::uint32_t e = 0; e < 20; ++e) t.link("c#e" + std::to_string(e), CategoryId(0), EntityId(e), e % 3);
  EXPECT_EQ(t.size(), 20u);
  for (std::uint32_t e = 0; e < 20; ++e) {
    const auto* tr = t.find("c#e" + std::to_string(e), CategoryId(0), EntityId(e));
    ASSERT_NE(tr, nullptr);
    EXPECT_EQ(tr->entity, EntityId(e));
    EXPECT_EQ(tr->trees, (std::vector<std::uint32_t>{e % 3}));
  }
  EXPECT_EQ(t.find("c#missing", CategoryId(0), EntityId(99)), nullptr);
}

TEST(ChainedTable, RestoreRoundTrip) {
  ChainedHashTable a(HashParams{31, 5, 2, 16});
  a.link("x#y", CategoryId(1), EntityId(2), 3);
  ChainedHashTable b(HashParams{31, 5, 2, 16});
  b.restore(a.buckets(), a.triads());
  EXPECT_TRUE(a == b);
  EXPECT_THROW(b.restore(std::vector<std::int32_t>(3, -1), {}), IntegrityError);
}

TEST(HashParams, Validation) {
  EXPECT_THROW(ChainedHashTable(HashParams{31, 5, 2, 0}), ConfigError);
  EXPECT_THROW(ChainedHashTable(HashParams{31, 0, 2, 16}), ConfigError);
}

}  // namespace
}  // namespace ssrec
