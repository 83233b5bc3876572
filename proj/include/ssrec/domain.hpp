#ifndef SSREC_DOMAIN_HPP
#define SSREC_DOMAIN_HPP

#include <algorithm>
#include <cstdint>
#include <deque>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "ssrec/types.hpp"

namespace ssrec {

/// The <category, producer, entities> triplet flowing on the item stream.
struct SocialItem {
  std::string item_id;
  CategoryId category;
  ProducerId producer;
  std::vector<EntityId> entities;  // order as given, duplicates kept
  std::int64_t timestamp = 0;      // first time the item was seen
};

struct Interaction {
  ConsumerId consumer;
  ItemIndex item = 0;
  std::int64_t timestamp = 0;
};

struct Vocabularies {
  Interner categories;
  Interner users;
  Interner entities;
  Interner items;
};

/// An ingested log: items indexed by ItemIndex, interactions sorted by
/// (timestamp, input order).
struct Dataset {
  Vocabularies vocab;
  std::vector<SocialItem> items;
  std::vector<Interaction> interactions;
  // Items were also loaded from an item stream with creation timestamps.
  bool has_catalog = false;

  std::size_t n_categories() const { return vocab.categories.size(); }
};

/// One raw log row before interning.
struct LogRow {
  std::int64_t ts = 0;
  std::string consumer;
  std::string item;
  std::string category;
  std::string producer;
  std::vector<std::string> entities;
  std::size_t line = 0;
};

enum class InputFormat { jsonl, csv };

inline InputFormat parse_input_format(std::string_view name) {
  if (name == "jsonl" || name == "json") return InputFormat::jsonl;
  if (name == "csv") return InputFormat::csv;
  throw ConfigError("unknown input format '" + std::string(name) + "' (expected jsonl or csv)");
}

namespace detail {

inline std::string line_prefix(std::size_t line) { return "line " + std::to_string(line) + ": "; }

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

inline std::vector<std::string> split_pipes(const std::string& s) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find('|', start);
    auto piece = s.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
    if (!piece.empty()) out.push_back(std::move(piece));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::int64_t parse_timestamp(const std::string& s, std::size_t line) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    throw DataError(line_prefix(line) + "timestamp '" + s + "' is not an integer");
  }
  if (used != s.size()) throw DataError(line_prefix(line) + "timestamp '" + s + "' is not an integer");
  if (v < 0) throw DataError(line_prefix(line) + "negative timestamp");
  return v;
}

}  // namespace detail

inline std::vector<LogRow> parse_jsonl(std::istream& in) {
  std::vector<LogRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(detail::line_prefix(lineno) + "malformed JSON: " + e.what());
    }
    if (!j.is_object()) throw DataError(detail::line_prefix(lineno) + "row is not a JSON object");
    LogRow row;
    row.line = lineno;
    auto need_string = [&](const char* key) -> std::string {
      auto it = j.find(key);
      if (it == j.end()) throw DataError(detail::line_prefix(lineno) + "missing field '" + key + "'");
      if (!it->is_string()) throw DataError(detail::line_prefix(lineno) + "field '" + key + "' must be a string");
      return it->get<std::string>();
    };
    auto ts = j.find("ts");
    if (ts == j.end()) throw DataError(detail::line_prefix(lineno) + "missing field 'ts'");
    if (!ts->is_number_integer()) throw DataError(detail::line_prefix(lineno) + "field 'ts' must be an integer");
    row.ts = ts->get<std::int64_t>();
    if (row.ts < 0) throw DataError(detail::line_prefix(lineno) + "negative timestamp");
    row.consumer = need_string("consumer");
    row.item = need_string("item");
    row.category = need_string("category");
    row.producer = need_string("producer");
    auto ents = j.find("entities");
    if (ents != j.end()) {
      if (!ents->is_array()) throw DataError(detail::line_prefix(lineno) + "field 'entities' must be an array");
      for (const auto& e : *ents) {
        if (!e.is_string()) throw DataError(detail::line_prefix(lineno) + "entities must be strings");
        row.entities.push_back(e.get<std::string>());
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::vector<LogRow> parse_csv(std::istream& in) {
  std::vector<LogRow> rows;
  std::string line;
  std::size_t lineno = 0;
  std::map<std::string, std::size_t> columns;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fields = detail::split_csv_line(line);
    if (columns.empty()) {
      for (std::size_t i = 0; i < fields.size(); ++i) columns[fields[i]] = i;
      for (const char* col : {"ts", "consumer", "item", "category", "producer", "entities"}) {
        if (!columns.count(col)) throw DataError(detail::line_prefix(lineno) + "missing column '" + col + "'");
      }
      continue;
    }
    if (fields.size() < columns.size()) {
      throw DataError(detail::line_prefix(lineno) + "expected " + std::to_string(columns.size()) +
                      " columns, found " + std::to_string(fields.size()));
    }
    LogRow row;
    row.line = lineno;
    row.ts = detail::parse_timestamp(fields[columns["ts"]], lineno);
    row.consumer = fields[columns["consumer"]];
    row.item = fields[columns["item"]];
    row.category = fields[columns["category"]];
    row.producer = fields[columns["producer"]];
    row.entities = detail::split_pipes(fields[columns["entities"]]);
    for (const char* col : {"consumer", "item", "category", "producer"}) {
      if (fields[columns[col]].empty()) throw DataError(detail::line_prefix(lineno) + "empty column '" + col + "'");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Interns rows into a dataset. Rows are stably sorted by timestamp first,
/// so ids are handed out in stream order. An item's content comes from its
/// earliest row. Catalog rows (the item stream, consumer ignored) are
/// interned before any interaction and carry creation timestamps.
inline Dataset dataset_from_rows(std::vector<LogRow> rows, std::vector<LogRow> catalog = {}) {
  auto by_ts = [](const LogRow& a, const LogRow& b) { return a.ts < b.ts; };
  std::stable_sort(rows.begin(), rows.end(), by_ts);
  std::stable_sort(catalog.begin(), catalog.end(), by_ts);
  Dataset ds;
  ds.has_catalog = !catalog.empty();
  auto add_item = [&](const LogRow& row) {
    const auto item = ds.vocab.items.intern(row.item);
    SocialItem si;
    si.item_id = row.item;
    si.category = CategoryId(ds.vocab.categories.intern(row.category));
    si.producer = ProducerId(ds.vocab.users.intern(row.producer));
    si.entities.reserve(row.entities.size());
    for (const auto& e : row.entities) si.entities.push_back(EntityId(ds.vocab.entities.intern(e)));
    si.timestamp = row.ts;
    ds.items.push_back(std::move(si));
    return item;
  };
  for (const auto& row : catalog) {
    if (ds.vocab.items.find(row.item)) throw DataError(detail::line_prefix(row.line) + "duplicate catalog item '" + row.item + "'");
    add_item(row);
  }
  ds.interactions.reserve(rows.size());
  for (const auto& row : rows) {
    const auto consumer = ConsumerId(ds.vocab.users.intern(row.consumer));
    const auto known = ds.vocab.items.find(row.item);
    ItemIndex item = 0;
    if (known) {
      item = *known;
      if (ds.has_catalog && ds.vocab.categories.name(ds.items[item].category.value) != row.category)
        throw DataError(detail::line_prefix(row.line) + "category of item '" + row.item + "' disagrees with the catalog");
    } else {
      item = add_item(row);
    }
    ds.interactions.push_back(Interaction{consumer, item, row.ts});
  }
  return ds;
}

/// Item stream rows: ts, item, category, producer, entities. Extra fields
/// are ignored.
inline std::vector<LogRow> parse_items_jsonl(std::istream& in) {
  std::vector<LogRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(detail::line_prefix(lineno) + "malformed JSON: " + e.what());
    }
    if (!j.is_object()) throw DataError(detail::line_prefix(lineno) + "row is not a JSON object");
    LogRow row;
    row.line = lineno;
    try {
      row.ts = j.at("ts").get<std::int64_t>();
      row.item = j.at("item").get<std::string>();
      row.category = j.at("category").get<std::string>();
      row.producer = j.at("producer").get<std::string>();
      if (j.contains("entities")) row.entities = j["entities"].get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError(detail::line_prefix(lineno) + "bad item row: " + e.what());
    }
    if (row.ts < 0) throw DataError(detail::line_prefix(lineno) + "negative timestamp");
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::vector<LogRow> read_items_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open item file '" + path + "'");
  return parse_items_jsonl(in);
}

inline Dataset ingest_stream(std::istream& in, InputFormat format) {
  return dataset_from_rows(format == InputFormat::jsonl ? parse_jsonl(in) : parse_csv(in));
}

inline Dataset ingest_log(const std::string& path, InputFormat format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open input file '" + path + "'");
  return ingest_stream(in, format);
}

inline std::string to_jsonl_line(const LogRow& row) {
  nlohmann::json j;
  j["ts"] = row.ts;
  j["consumer"] = row.consumer;
  j["item"] = row.item;
  j["category"] = row.category;
  j["producer"] = row.producer;
  j["entities"] = row.entities;
  return j.dump();
}

/// Sidecar mapping string -> id for every vocabulary.
inline nlohmann::json vocabulary_json(const Vocabularies& v) {
  auto dump = [](const Interner& in) {
    nlohmann::json j = nlohmann::json::object();
    for (std::size_t i = 0; i < in.size(); ++i) j[in.name(static_cast<std::uint32_t>(i))] = i;
    return j;
  };
  return {{"categories", dump(v.categories)},
          {"users", dump(v.users)},
          {"entities", dump(v.entities)},
          {"items", dump(v.items)}};
}

/// Exact dump of a dataset: names in id order, items and interactions by id.
inline nlohmann::json dataset_to_json(const Dataset& ds) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& it : ds.items) {
    std::vector<std::uint32_t> ents;
    for (auto e : it.entities) ents.push_back(e.value);
    items.push_back({it.category.value, it.producer.value, ents, it.timestamp});
  }
  nlohmann::json inter = nlohmann::json::array();
  for (const auto& in : ds.interactions) inter.push_back({in.consumer.value, in.item, in.timestamp});
  return {{"schema", "ssrec-dataset"},
          {"version", 1},
          {"has_catalog", ds.has_catalog},
          {"vocab",
           {{"categories", ds.vocab.categories.names()},
            {"users", ds.vocab.users.names()},
            {"entities", ds.vocab.entities.names()},
            {"items", ds.vocab.items.names()}}},
          {"items", items},
          {"interactions", inter}};
}

inline Dataset dataset_from_json(const nlohmann::json& j) {
  Dataset ds;
  try {
    if (j.at("schema") != "ssrec-dataset") throw DataError("not a dataset bundle");
    if (j.at("version").get<int>() != 1) throw DataError("unsupported dataset version");
    ds.has_catalog = j.at("has_catalog").get<bool>();
    const auto& v = j.at("vocab");
    auto load = [&](const char* key, Interner& in) {
      for (const auto& n : v.at(key)) in.intern(n.get<std::string>());
      if (in.size() != v.at(key).size()) throw DataError(std::string("duplicate name in vocabulary ") + key);
    };
    load("categories", ds.vocab.categories);
    load("users", ds.vocab.users);
    load("entities", ds.vocab.entities);
    load("items", ds.vocab.items);
    for (const auto& row : j.at("items")) {
      SocialItem si;
      si.item_id = ds.vocab.items.name(static_cast<std::uint32_t>(ds.items.size()));
      si.category = CategoryId(row.at(0).get<std::uint32_t>());
      si.producer = ProducerId(row.at(1).get<std::uint32_t>());
      for (const auto& e : row.at(2)) si.entities.push_back(EntityId(e.get<std::uint32_t>()));
      si.timestamp = row.at(3).get<std::int64_t>();
      if (si.category.value >= ds.vocab.categories.size() || si.producer.value >= ds.vocab.users.size())
        throw DataError("item " + si.item_id + " refers to an unknown id");
      for (auto e : si.entities)
        if (e.value >= ds.vocab.entities.size()) throw DataError("item " + si.item_id + " refers to an unknown entity");
      ds.items.push_back(std::move(si));
    }
    if (ds.items.size() != ds.vocab.items.size()) throw DataError("item table and item vocabulary differ in size");
    for (const auto& row : j.at("interactions")) {
      Interaction in{ConsumerId(row.at(0).get<std::uint32_t>()), row.at(1).get<ItemIndex>(), row.at(2).get<std::int64_t>()};
      if (in.consumer.value >= ds.vocab.users.size() || in.item >= ds.items.size())
        throw DataError("interaction refers to an unknown id");
      ds.interactions.push_back(in);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed dataset bundle: ") + e.what());
  }
  return ds;
}

// ---------------------------------------------------------------------------
// User profiles
// ---------------------------------------------------------------------------

/// One browsed item as remembered by a profile.
struct ProfileEvent {
  ItemIndex item = 0;
  CategoryId category;
  ProducerId producer;
  std::vector<EntityId> entities;
  std::int64_t timestamp = 0;

  friend bool operator==(const ProfileEvent&, const ProfileEvent&) = default;
};

inline ProfileEvent make_event(const SocialItem& item, ItemIndex index, std::int64_t ts) {
  return ProfileEvent{index, item.category, item.producer, item.entities, ts};
}

/// Long-term interest list with counts derived from the event sequence.
class LongTermList {
 public:
  void append(ProfileEvent ev) {
    ++producer_counts_[ev.producer];
    ++category_counts_[ev.category];
    ++total_producers_;
    for (auto e : ev.entities) {
      ++entity_counts_[e];
      ++total_entities_;
    }
    events_.push_back(std::move(ev));
  }

  const std::vector<ProfileEvent>& events() const { return events_; }
  std::size_t size() const { return events_.size(); }
  bool empty() const { return events_.empty(); }

  std::uint32_t producer_count(ProducerId p) const { return lookup(producer_counts_, p); }
  std::uint32_t entity_count(EntityId e) const { return lookup(entity_counts_, e); }
  std::uint32_t category_count(CategoryId c) const { return lookup(category_counts_, c); }

  /// |U^p|: number of producer observations.
  std::uint32_t total_producers() const { return total_producers_; }
  /// |E|: number of entity occurrences.
  std::uint32_t total_entities() const { return total_entities_; }

  const std::unordered_map<ProducerId, std::uint32_t>& producer_counts() const { return producer_counts_; }
  const std::unordered_map<EntityId, std::uint32_t>& entity_counts() const { return entity_counts_; }
  const std::unordered_map<CategoryId, std::uint32_t>& category_counts() const { return category_counts_; }

  /// True when the stored counts match a recount of the event sequence.
  bool consistent() const {
    LongTermList fresh;
    for (const auto& ev : events_) fresh.append(ev);
    return fresh.producer_counts_ == producer_counts_ && fresh.entity_counts_ == entity_counts_ &&
           fresh.category_counts_ == category_counts_ && fresh.total_producers_ == total_producers_ &&
           fresh.total_entities_ == total_entities_;
  }

 private:
  template <class Map, class Key>
  static std::uint32_t lookup(const Map& m, Key k) {
    auto it = m.find(k);
    return it == m.end() ? 0 : it->second;
  }

  std::vector<ProfileEvent> events_;
  std::unordered_map<ProducerId, std::uint32_t> producer_counts_;
  std::unordered_map<EntityId, std::uint32_t> entity_counts_;
  std::unordered_map<CategoryId, std::uint32_t> category_counts_;
  std::uint32_t total_producers_ = 0;
  std::uint32_t total_entities_ = 0;
};

/// Fixed-capacity FIFO of the most recent items.
class ShortTermWindow {
 public:
  explicit ShortTermWindow(std::size_t capacity = 5) : capacity_(capacity) {
    if (capacity_ == 0) throw ConfigError("short-term window capacity must be at least 1");
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return events_.size(); }
  bool empty() const { return events_.empty(); }
  bool full() const { return events_.size() >= capacity_; }
  const std::deque<ProfileEvent>& events() const { return events_; }

  void push(ProfileEvent ev) { events_.push_back(std::move(ev)); }

  std::deque<ProfileEvent> drain() {
    std::deque<ProfileEvent> out;
    out.swap(events_);
    return out;
  }

 private:
  std::size_t capacity_;
  std::deque<ProfileEvent> events_;
};

/// The CPPse pair: long-term list plus short-term window. Trained models are
/// kept in a ModelBundle keyed by consumer, not inside the profile.
struct UserProfile {
  ConsumerId consumer;
  LongTermList long_term;
  ShortTermWindow short_term;

  explicit UserProfile(ConsumerId c = ConsumerId{}, std::size_t window_capacity = 5)
      : consumer(c), short_term(window_capacity) {}

  /// Flush semantics: a full window is appended to the long-term list and
  /// emptied before the new event enters it.
  void observe(ProfileEvent ev) {
    if (short_term.full()) {
      for (auto& old : short_term.drain()) long_term.append(std::move(old));
    }
    short_term.push(std::move(ev));
  }

  std::size_t total_events() const { return long_term.size() + short_term.size(); }

  /// Long-term events followed by window events, in temporal order.
  std::vector<const ProfileEvent*> history() const {
    std::vector<const ProfileEvent*> out;
    out.reserve(total_events());
    for (const auto& ev : long_term.events()) out.push_back(&ev);
    for (const auto& ev : short_term.events()) out.push_back(&ev);
    return out;
  }

  /// Sorted set of categories the user has browsed.
  std::vector<CategoryId> categories() const {
    std::set<CategoryId> s;
    for (const auto* ev : history()) s.insert(ev->category);
    return {s.begin(), s.end()};
  }
};

using ProfileMap = std::map<ConsumerId, UserProfile>;

/// Replays interactions (already sorted) through the flush rule.
inline ProfileMap build_profiles(const Dataset& ds, std::span<const Interaction> interactions,
                                 std::size_t window_capacity) {
  if (window_capacity == 0) throw ConfigError("window capacity must be at least 1");
  ProfileMap profiles;
  for (const auto& in : interactions) {
    auto it = profiles.find(in.consumer);
    if (it == profiles.end()) it = profiles.emplace(in.consumer, UserProfile(in.consumer, window_capacity)).first;
    it->second.observe(make_event(ds.items.at(in.item), in.item, in.timestamp));
  }
  return profiles;
}

inline ProfileMap build_profiles(const Dataset& ds, std::size_t window_capacity) {
  return build_profiles(ds, ds.interactions, window_capacity);
}

struct UserModes {
  std::set<UserId> producers;
  std::set<UserId> consumers;
};

/// A user is a producer iff it authored an item and a consumer iff it browsed
/// one. Pure producers never receive recommendations.
inline UserModes classify_user_modes(std::span<const Interaction> interactions, std::span<const SocialItem> items) {
  UserModes modes;
  for (const auto& item : items) modes.producers.insert(item.producer);
  for (const auto& in : interactions) modes.consumers.insert(in.consumer);
  return modes;
}

}  // namespace ssrec

#endif  // SSREC_DOMAIN_HPP
