#ifndef SSREC_TYPES_HPP
#define SSREC_TYPES_HPP

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ssrec {

// Errors map onto CLI exit codes: ConfigError -> 1, DataError -> 2,
// IntegrityError -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// Dense integer handle. The tag keeps category, user and entity ids apart.
template <class Tag>
struct Id {
  std::uint32_t value = 0;

  constexpr Id() = default;
  constexpr explicit Id(std::uint32_t v) : value(v) {}

  friend constexpr auto operator<=>(Id, Id) = default;
};

using CategoryId = Id<struct CategoryTag>;
using UserId = Id<struct UserTag>;
using EntityId = Id<struct EntityTag>;

// Producers and consumers share one user namespace: a user can be both.
using ProducerId = UserId;
using ConsumerId = UserId;

/// Index into Dataset::items.
using ItemIndex = std::uint32_t;

/// String <-> dense id bijection, ids handed out in first-seen order.
class Interner {
 public:
  std::uint32_t intern(std::string_view name) {
    auto it = ids_.find(std::string(name));
    if (it != ids_.end()) return it->second;
    const auto id = static_cast<std::uint32_t>(names_.size());
    names_.emplace_back(name);
    ids_.emplace(names_.back(), id);
    return id;
  }

  std::optional<std::uint32_t> find(std::string_view name) const {
    auto it = ids_.find(std::string(name));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& name(std::uint32_t id) const { return names_.at(id); }
  std::size_t size() const { return names_.size(); }
  bool empty() const { return names_.empty(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t> ids_;
};

inline constexpr double kDefaultFloor = 1e-10;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

}  // namespace ssrec

template <class Tag>
struct std::hash<ssrec::Id<Tag>> {
  std::size_t operator()(ssrec::Id<Tag> id) const noexcept {
    return std::hash<std::uint32_t>{}(id.value);
  }
};

#endif  // SSREC_TYPES_HPP
