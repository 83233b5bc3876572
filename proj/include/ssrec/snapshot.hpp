#ifndef SSREC_SNAPSHOT_HPP
#define SSREC_SNAPSHOT_HPP

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <memory>
#include <ostream>
#include <string>
#include <type_traits>
#include <vector>

#include "ssrec/cppse_index.hpp"

namespace ssrec {

inline constexpr std::array<char, 8> kSnapshotMagic{'S', 'S', 'R', 'E', 'C', 'I', 'D', 'X'};
inline constexpr std::uint32_t kSnapshotVersion = 1;

namespace detail {

class BinWriter {
 public:
  explicit BinWriter(std::ostream& out) : out_(out) {}

  template <class T>
    requires std::is_arithmetic_v<T>
  void put(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void put_size(std::size_t n) { put<std::uint64_t>(n); }
  void put_str(const std::string& s) {
    put_size(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  template <class T>
  void put_vec(const std::vector<T>& v) {
    put_size(v.size());
    for (const auto& x : v) put(x);
  }
  void put_sparse(const SparseVec& v) {
    put_size(v.size());
    for (const auto& [s, x] : v) {
      put(s);
      put(x);
    }
  }

 private:
  std::ostream& out_;
};

class BinReader {
 public:
  explicit BinReader(std::istream& in) : in_(in) {}

  template <class T>
    requires std::is_arithmetic_v<T>
  T get() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) throw IntegrityError("snapshot truncated");
    return v;
  }
  std::size_t get_size() {
    const auto n = get<std::uint64_t>();
    if (n > (std::uint64_t{1} << 40)) throw IntegrityError("snapshot length field out of range");
    return static_cast<std::size_t>(n);
  }
  std::string get_str() {
    std::string s(get_size(), '\0');
    in_.read(s.data(), static_cast<std::streamsize>(s.size()));
    if (!in_) throw IntegrityError("snapshot truncated");
    return s;
  }
  template <class T>
  std::vector<T> get_vec() {
    std::vector<T> v(get_size());
    for (auto& x : v) x = get<T>();
    return v;
  }
  SparseVec get_sparse() {
    SparseVec v(get_size());
    for (auto& [s, x] : v) {
      s = get<std::uint32_t>();
      x = get<double>();
    }
    return v;
  }

 private:
  std::istream& in_;
};

inline void put_interner(BinWriter& w, const Interner& in) {
  w.put_size(in.size());
  for (const auto& n : in.names()) w.put_str(n);
}

inline Interner get_interner(BinReader& r) {
  Interner in;
  const auto n = r.get_size();
  for (std::size_t i = 0; i < n; ++i) {
    if (in.intern(r.get_str()) != i) throw IntegrityError("snapshot vocabulary has duplicate names");
  }
  return in;
}

inline void put_event(BinWriter& w, const ProfileEvent& e) {
  w.put(e.item);
  w.put(e.category.value);
  w.put(e.producer.value);
  w.put_size(e.entities.size());
  for (auto x : e.entities) w.put(x.value);
  w.put(e.timestamp);
}

inline ProfileEvent get_event(BinReader& r) {
  ProfileEvent e;
  e.item = r.get<ItemIndex>();
  e.category = CategoryId(r.get<std::uint32_t>());
  e.producer = ProducerId(r.get<std::uint32_t>());
  e.entities.resize(r.get_size());
  for (auto& x : e.entities) x = EntityId(r.get<std::uint32_t>());
  e.timestamp = r.get<std::int64_t>();
  return e;
}

inline void put_signature(BinWriter& w, const Signature& s) {
  w.put(s.p_long);
  w.put(s.p_short);
  w.put(s.producer_total_min);
  w.put(s.entity_total_min);
  w.put_sparse(s.producer_max);
  w.put_sparse(s.entity_max);
}

inline Signature get_signature(BinReader& r) {
  Signature s;
  s.p_long = r.get<double>();
  s.p_short = r.get<double>();
  s.producer_total_min = r.get<std::uint32_t>();
  s.entity_total_min = r.get<std::uint32_t>();
  s.producer_max = r.get_sparse();
  s.entity_max = r.get_sparse();
  return s;
}

inline void put_slots(BinWriter& w, const SlotVocabulary& v) {
  w.put_vec(v.ids());
  w.put_size(v.capacity());
}

inline SlotVocabulary get_slots(BinReader& r) {
  SlotVocabulary v;
  auto ids = r.get_vec<std::uint32_t>();
  const auto cap = r.get_size();
  v.restore(std::move(ids), cap);
  return v;
}

}  // namespace detail

inline void save_index(const CppseIndex& ix, std::ostream& out) {
  detail::BinWriter w(out);
  const auto& cfg = ix.config();
  out.write(kSnapshotMagic.data(), kSnapshotMagic.size());
  w.put(kSnapshotVersion);
  w.put<std::uint64_t>(cfg.hash.table_size);
  w.put<std::uint64_t>(cfg.fanout);
  w.put(cfg.block_threshold);
  w.put_size(ix.blocks().size());

  w.put(cfg.hash.seed);
  w.put(cfg.hash.shift_left);
  w.put(cfg.hash.shift_right);
  w.put(cfg.reserve);
  const auto& sc = ix.scoring();
  w.put(sc.lambda_s);
  w.put(sc.mu_producer);
  w.put(sc.mu_entity);
  w.put(sc.floor);
  w.put_size(ix.n_categories());
  w.put_size(ix.window_capacity());

  const auto& v = ix.vocab();
  detail::put_interner(w, v.categories);
  detail::put_interner(w, v.users);
  detail::put_interner(w, v.entities);
  detail::put_interner(w, v.items);
  w.put_vec(ix.background().producer);
  w.put_vec(ix.background().entity);

  w.put_size(ix.records().size());
  for (const auto& r : ix.records()) {
    const auto& p = r.state.profile;
    w.put(r.state.consumer.value);
    w.put_size(p.short_term.capacity());
    w.put_size(p.long_term.size());
    for (const auto& e : p.long_term.events()) detail::put_event(w, e);
    w.put_size(p.short_term.size());
    for (const auto& e : p.short_term.events()) detail::put_event(w, e);
    w.put_vec(r.state.p_long);
    w.put_vec(r.state.p_short);
    w.put(r.block);
    w.put_sparse(r.impacts->producer);
    w.put_sparse(r.impacts->entity);
  }

  for (const auto& b : ix.blocks()) {
    w.put(b.id);
    w.put_size(b.members.size());
    for (auto m : b.members) w.put(m.value);
    w.put_size(b.categories.size());
    for (auto c : b.categories) w.put(c.value);
    detail::put_slots(w, b.producers);
    detail::put_slots(w, b.entities);
    w.put_size(b.trees.size());
    for (const auto& [c, t] : b.trees) {
      w.put(c.value);
      w.put(t);
    }
  }
  const auto& sums = ix.assigner().sums();
  w.put_size(sums.size());
  for (const auto& s : sums) w.put_vec(s);

  w.put_size(ix.trees().size());
  for (const auto& t : ix.trees()) {
    w.put(t.block);
    w.put(t.category.value);
    w.put_size(t.tree.fanout());
    w.put(t.tree.root());
    w.put_size(t.tree.nodes().size());
    for (const auto& n : t.tree.nodes()) {
      w.put<std::uint8_t>(n.leaf ? 1 : 0);
      w.put(n.parent);
      w.put_size(n.entries.size());
      for (const auto& e : n.entries) {
        w.put(e.consumer.value);
        w.put(e.record);
        w.put(e.p_long);
        w.put(e.p_short);
        w.put(e.producer_total);
        w.put(e.entity_total);
      }
      w.put_vec(n.children);
      w.put_size(n.child_sigs.size());
      for (const auto& s : n.child_sigs) detail::put_signature(w, s);
    }
  }

  w.put_vec(ix.hash_table().buckets());
  w.put_size(ix.hash_table().triads().size());
  for (const auto& t : ix.hash_table().triads()) {
    w.put(t.key);
    w.put(t.category.value);
    w.put(t.entity.value);
    w.put_vec(t.trees);
    w.put(t.next);
  }
  if (!out) throw DataError("failed writing index snapshot");
}

inline CppseIndex load_index(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kSnapshotMagic) throw IntegrityError("not an index snapshot (bad magic)");
  detail::BinReader r(in);
  const auto version = r.get<std::uint32_t>();
  if (version != kSnapshotVersion) throw IntegrityError("unsupported snapshot version " + std::to_string(version));

  CppseIndex::Parts p;
  p.cfg.hash.table_size = r.get<std::uint64_t>();
  p.cfg.fanout = r.get<std::uint64_t>();
  p.cfg.block_threshold = r.get<double>();
  const auto n_blocks = r.get_size();
  p.cfg.hash.seed = r.get<std::uint64_t>();
  p.cfg.hash.shift_left = r.get<unsigned>();
  p.cfg.hash.shift_right = r.get<unsigned>();
  p.cfg.reserve = r.get<double>();
  try {
    p.cfg.validate();
  } catch (const ConfigError& e) {
    throw IntegrityError(std::string("snapshot header: ") + e.what());
  }
  p.scoring.lambda_s = r.get<double>();
  p.scoring.mu_producer = r.get<double>();
  p.scoring.mu_entity = r.get<double>();
  p.scoring.floor = r.get<double>();
  p.n_categories = r.get_size();
  p.window_capacity = r.get_size();

  p.vocab.categories = detail::get_interner(r);
  p.vocab.users = detail::get_interner(r);
  p.vocab.entities = detail::get_interner(r);
  p.vocab.items = detail::get_interner(r);
  p.bg.producer = r.get_vec<double>();
  p.bg.entity = r.get_vec<double>();

  p.records.resize(r.get_size());
  for (auto& rec : p.records) {
    const ConsumerId c(r.get<std::uint32_t>());
    const auto cap = r.get_size();
    if (cap == 0) throw IntegrityError("snapshot window capacity is zero");
    UserProfile prof(c, cap);
    const auto n_lt = r.get_size();
    for (std::size_t i = 0; i < n_lt; ++i) prof.long_term.append(detail::get_event(r));
    const auto n_st = r.get_size();
    if (n_st > cap) throw IntegrityError("snapshot window over capacity");
    for (std::size_t i = 0; i < n_st; ++i) prof.short_term.push(detail::get_event(r));
    rec.state.consumer = c;
    rec.state.profile = std::move(prof);
    rec.state.p_long = r.get_vec<double>();
    rec.state.p_short = r.get_vec<double>();
    rec.block = r.get<std::uint32_t>();
    Impacts im;
    im.producer = r.get_sparse();
    im.entity = r.get_sparse();
    rec.impacts = std::make_shared<const Impacts>(std::move(im));
  }

  p.blocks.resize(n_blocks);
  for (auto& b : p.blocks) {
    b.id = r.get<std::uint32_t>();
    b.members.resize(r.get_size());
    for (auto& m : b.members) m = ConsumerId(r.get<std::uint32_t>());
    const auto n_cat = r.get_size();
    for (std::size_t i = 0; i < n_cat; ++i) b.categories.insert(CategoryId(r.get<std::uint32_t>()));
    b.producers = detail::get_slots(r);
    b.entities = detail::get_slots(r);
    const auto n_trees = r.get_size();
    for (std::size_t i = 0; i < n_trees; ++i) {
      const CategoryId c(r.get<std::uint32_t>());
      b.trees.emplace(c, r.get<std::uint32_t>());
    }
  }
  p.centroid_sums.resize(r.get_size());
  for (auto& s : p.centroid_sums) s = r.get_vec<double>();

  p.trees.resize(r.get_size());
  for (auto& t : p.trees) {
    t.block = r.get<std::uint32_t>();
    t.category = CategoryId(r.get<std::uint32_t>());
    const auto fanout = r.get_size();
    if (fanout < 2) throw IntegrityError("snapshot tree fanout below 2");
    const auto root = r.get<std::uint32_t>();
    std::vector<TreeNode> nodes(r.get_size());
    for (auto& n : nodes) {
      n.leaf = r.get<std::uint8_t>() != 0;
      n.parent = r.get<std::int32_t>();
      n.entries.resize(r.get_size());
      for (auto& e : n.entries) {
        e.consumer = ConsumerId(r.get<std::uint32_t>());
        e.record = r.get<std::uint32_t>();
        e.p_long = r.get<double>();
        e.p_short = r.get<double>();
        e.producer_total = r.get<std::uint32_t>();
        e.entity_total = r.get<std::uint32_t>();
        if (e.record >= p.records.size()) throw IntegrityError("snapshot leaf refers to a missing record");
      }
      n.children = r.get_vec<std::uint32_t>();
      n.child_sigs.resize(r.get_size());
      for (auto& s : n.child_sigs) s = detail::get_signature(r);
      for (auto c : n.children)
        if (c >= nodes.size()) throw IntegrityError("snapshot tree has a dangling child");
    }
    t.tree = SignatureTree(fanout);
    t.tree.restore(root, std::move(nodes));
  }

  p.buckets = r.get_vec<std::int32_t>();
  p.triads.resize(r.get_size());
  for (auto& t : p.triads) {
    t.key = r.get<std::uint64_t>();
    t.category = CategoryId(r.get<std::uint32_t>());
    t.entity = EntityId(r.get<std::uint32_t>());
    t.trees = r.get_vec<std::uint32_t>();
    t.next = r.get<std::int32_t>();
    if (t.next >= static_cast<std::int64_t>(p.triads.size())) throw IntegrityError("snapshot hash chain out of range");
  }
  for (auto b : p.buckets)
    if (b >= static_cast<std::int64_t>(p.triads.size())) throw IntegrityError("snapshot bucket out of range");
  if (in.peek() != std::char_traits<char>::eof()) throw IntegrityError("trailing bytes after snapshot");
  return CppseIndex::restore(std::move(p));
}

inline void save_index_file(const CppseIndex& ix, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  save_index(ix, out);
}

/// Loads a snapshot; with verify set every structural invariant is replayed.
inline CppseIndex load_index_file(const std::string& path, bool verify) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  auto ix = load_index(in);
  if (verify) ix.verify();
  return ix;
}

}  // namespace ssrec

#endif  // SSREC_SNAPSHOT_HPP
