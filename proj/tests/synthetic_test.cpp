#include <set>

#include <gtest/gtest.h>

#include "ssrec/synthetic.hpp"

namespace ssrec {
namespace {

SyntheticSpec small(std::uint64_t seed) {
  SyntheticSpec s;
  s.seed = seed;
  s.consumers = 30;
  s.producers = 10;
  s.steps = 20;
  s.items_per_step = 2;
  return s;
}

std::string dump(const SyntheticData& d) {
  std::string out;
  for (const auto& r : d.interactions) out += to_jsonl_line(r) + "\n";
  for (const auto& it : d.items) out += item_jsonl_line(it) + "\n";
  return out;
}

TEST(Synthetic, SameSeedSameData) {
  EXPECT_EQ(dump(generate_synthetic(small(3))), dump(generate_synthetic(small(3))));
  EXPECT_NE(dump(generate_synthetic(small(3))), dump(generate_synthetic(small(4))));
}

TEST(Synthetic, Sizes) {
  const auto s = small(1);
  const auto d = generate_synthetic(s);
  EXPECT_EQ(d.interactions.size(), s.consumers * s.steps);
  EXPECT_EQ(d.consumer_z.size(), d.interactions.size());
  EXPECT_EQ(d.items.size(), s.producers * s.items_per_step * s.steps);
}

TEST(Synthetic, TimestampsStrictlyIncreaseAndItemsPrecedeUse) {
  const auto d = generate_synthetic(small(2));
  for (std::size_t i = 1; i < d.interactions.size(); ++i) EXPECT_LT(d.interactions[i - 1].ts, d.interactions[i].ts);
  std::map<std::string, std::int64_t> created;
  for (const auto& it : d.items) created[it.item] = it.ts;
  for (const auto& r : d.interactions) EXPECT_LT(created.at(r.item), r.ts);
}

TEST(Synthetic, ZeroConsumersGivesItemsOnly) {
  auto s = small(1);
  s.consumers = 0;
  const auto d = generate_synthetic(s);
  EXPECT_TRUE(d.interactions.empty());
  EXPECT_FALSE(d.items.empty());
}

TEST(Synthetic, FullSkewSplitsCategoriesByProducerState) {
  auto s = small(5);
  s.categories = 6;
  s.producer_skew = 1.0;
  for (const auto& it : generate_synthetic(s).items) {
    const auto c = std::stoul(it.category.substr(3));
    EXPECT_EQ(c < 3, it.state == 0) << it.item;
  }
}

TEST(Synthetic, AlwaysGatedStickyConsumersVisitAtMostTwoCategories) {
  auto s = small(6);
  s.categories = 6;
  s.gate_prob = 1.0;
  s.consumer_stay = 1.0;
  std::map<std::string, std::set<std::string>> seen;
  for (const auto& r : generate_synthetic(s).interactions) seen[r.consumer].insert(r.category);
  for (const auto& [u, cats] : seen) EXPECT_LE(cats.size(), 2u) << u;
}

TEST(Synthetic, HomeCategoriesBoundEachConsumer) {
  auto s = small(7);
  s.categories = 8;
  s.home_categories = 3;
  s.producers = 40;
  std::map<std::string, std::set<std::string>> seen;
  for (const auto& r : generate_synthetic(s).interactions) seen[r.consumer].insert(r.category);
  for (const auto& [u, cats] : seen) EXPECT_LE(cats.size(), 3u) << u;
}

TEST(Synthetic, DatasetKeepsEveryItem) {
  const auto d = generate_synthetic(small(8));
  const auto ds = synthetic_dataset(d);
  EXPECT_TRUE(ds.has_catalog);
  EXPECT_EQ(ds.items.size(), d.items.size());
  EXPECT_EQ(ds.interactions.size(), d.interactions.size());
  EXPECT_LT(synthetic_dataset(d, false).items.size(), d.items.size());
}

TEST(Synthetic, InvalidSpecIsRejected) {
  auto s = small(1);
  s.home_categories = 9;
  EXPECT_THROW(generate_synthetic(s), ConfigError);
  s = small(1);
  s.gate_prob = 2;
  EXPECT_THROW(generate_synthetic(s), ConfigError);
}

}  // namespace
}  // namespace ssrec
