#include <random>

#include <gtest/gtest.h>

#include "ssrec/signature_tree.hpp"

namespace ssrec {
namespace {

LEntry entry(std::mt19937_64& rng, std::uint32_t id) {
  LEntry e;
  e.consumer = ConsumerId(id);
  e.record = id;
  e.p_long = static_cast<double>(rng() % 1000) / 1000.0;
  e.p_short = static_cast<double>(rng() % 1000) / 1000.0;
  e.producer_total = static_cast<std::uint32_t>(rng() % 20);
  e.entity_total = static_cast<std::uint32_t>(rng() % 50);
  auto im = std::make_shared<Impacts>();
  for (std::uint32_t s = 0; s < 8; ++s) {
    if (rng() % 3 == 0) im->producer.emplace_back(s, static_cast<double>(rng() % 100) / 100.0);
    if (rng() % 2 == 0) im->entity.emplace_back(s, static_cast<double>(rng() % 100) / 100.0);
  }
  e.impacts = im;
  return e;
}

// Max over all leaf entries below n, recomputed from scratch.
Signature brute_signature(const SignatureTree& t, std::uint32_t n) {
  const auto& node = t.node(n);
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
    for (auto c : node.children) take(brute_signature(t, c));
  }
  return s;
}

void expect_exact_maxima(const SignatureTree& t) {
  for (std::uint32_t n = 0; n < t.nodes().size(); ++n) {
    const auto& node = t.node(n);
    if (node.leaf) continue;
    for (std::size_t i = 0; i < node.children.size(); ++i)
      EXPECT_EQ(node.child_sigs[i], brute_signature(t, node.children[i])) << "node " << n << " child " << i;
  }
}

TEST(Sparse, MaxAndLookup) {
  SparseVec a{{1, 0.5}, {4, 0.1}};
  const SparseVec b{{0, 0.2}, {4, 0.3}, {9, 0.7}};
  sparse_max_into(a, b);
  EXPECT_EQ(a, (SparseVec{{0, 0.2}, {1, 0.5}, {4, 0.3}, {9, 0.7}}));
  EXPECT_EQ(sparse_get(a, 4), 0.3);
  EXPECT_EQ(sparse_get(a, 5), 0.0);
}

TEST(Tree, SingletonRootEqualsLeafSignature) {
  std::mt19937_64 rng(1);
  SignatureTree t(16);
  const auto e = entry(rng, 0);
  t.bulk_load({e});
  EXPECT_EQ(t.height(), 1u);
  EXPECT_EQ(t.node_signature(t.root()), Signature::of(e));
  EXPECT_NO_THROW(t.verify("t"));
}

TEST(Tree, FanoutTwoFiveLeavesHasHeightThree) {
  std::mt19937_64 rng(2);
  std::vector<LEntry> es;
  for (std::uint32_t i = 0; i < 5; ++i) es.push_back(entry(rng, i));
  SignatureTree t(2);
  t.bulk_load(es);
  EXPECT_EQ(t.height(), 3u);
  EXPECT_EQ(t.size(), 5u);
  expect_exact_maxima(t);
  EXPECT_NO_THROW(t.verify("t"));
}

TEST(Tree, BulkLoadOrdersLeavesByLongTermProbability) {
  std::mt19937_64 rng(3);
  std::vector<LEntry> es;
  for (std::uint32_t i = 0; i < 9; ++i) es.push_back(entry(rng, i));
  SignatureTree t(3);
  t.bulk_load(es);
  double prev = 2;
  auto walk = [&](auto&& self, std::uint32_t n) -> void {
    const auto& node = t.node(n);
    if (node.leaf) {
      for (const auto& e : node.entries) {
        EXPECT_LE(e.p_long, prev);
        prev = e.p_long;
      }
      return;
    }
    for (auto c : node.children) self(self, c);
  };
  walk(walk, t.root());
}

TEST(Tree, InsertionsAndUpdatesKeepExactMaxima) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t fanout = 2 + rng() % 5;
    SignatureTree t(fanout);
    std::vector<LEntry> initial;
    for (std::uint32_t i = 0; i < rng() % 10; ++i) initial.push_back(entry(rng, i));
    t.bulk_load(initial);
    std::uint32_t next = 100;
    for (int step = 0; step < 60; ++step) {
      if (rng() % 3 == 0 && t.size() > 0) {
        const auto members = t.members();
        const auto id = members[rng() % members.size()].value;
        EXPECT_TRUE(t.update(entry(rng, id)));
      } else {
        t.insert(entry(rng, next++));
      }
    }
    ASSERT_NO_THROW(t.verify("t")) << "seed " << seed;
    expect_exact_maxima(t);
    EXPECT_EQ(t.size(), initial.size() + (next - 100));
  }
}

TEST(Tree, UpdateOfAbsentUserReportsFalse) {
  std::mt19937_64 rng(4);
  SignatureTree t(4);
  t.bulk_load({entry(rng, 0)});
  EXPECT_FALSE(t.update(entry(rng, 7)));
  EXPECT_THROW(t.insert(entry(rng, 0)), IntegrityError);
}

TEST(Tree, VerifyCatchesAStaleSignature) {
  std::mt19937_64 rng(5);
  std::vector<LEntry> es;
  for (std::uint32_t i = 0; i < 6; ++i) es.push_back(entry(rng, i));
  SignatureTree t(2);
  t.bulk_load(es);
  auto nodes = t.nodes();
  for (auto& n : nodes) {
    if (!n.leaf) {
      n.child_sigs[0].p_long += 0.5;
      break;
    }
  }
  SignatureTree broken(2);
  broken.restore(t.root(), nodes);
  EXPECT_THROW(broken.verify("t"), IntegrityError);
}

TEST(Tree, FanoutBelowTwoIsRejected) { EXPECT_THROW(SignatureTree(1), ConfigError); }

}  // namespace
}  // namespace ssrec
