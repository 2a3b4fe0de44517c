// SPDX-License-Identifier: Apache-2.0
//
// Identifiers and small value types shared by every module.

#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace elfstore {

template <class Tag>
struct Id {
  std::int32_t value = 0;

  constexpr Id() = default;
  constexpr explicit Id(std::int32_t v) : value(v) {}
  constexpr auto operator<=>(const Id&) const = default;
};

using FogId = Id<struct FogTag>;
using EdgeId = Id<struct EdgeTag>;

using StreamId = std::string;
using BlockId = std::string;

struct BlockKey {
  StreamId stream;
  BlockId block;

  auto operator<=>(const BlockKey&) const = default;
};

std::string to_string(const BlockKey& key);

// Quadrants of the (storage, reliability) plane. The first letter is the
// storage half and the second the reliability half: HL is "high free storage,
// low reliability". Local quadrant numbering maps q1=HH, q2=LH, q3=LL, q4=HL.
enum class Quadrant : std::uint8_t { HH = 0, HL = 1, LH = 2, LL = 3 };

inline constexpr std::array<Quadrant, 4> kAllQuadrants = {
    Quadrant::HH, Quadrant::HL, Quadrant::LH, Quadrant::LL};

constexpr Quadrant make_quadrant(bool high_storage, bool high_reliability) {
  if (high_storage) return high_reliability ? Quadrant::HH : Quadrant::HL;
  return high_reliability ? Quadrant::LH : Quadrant::LL;
}
constexpr bool high_storage(Quadrant q) {
  return q == Quadrant::HH || q == Quadrant::HL;
}
constexpr bool high_reliability(Quadrant q) {
  return q == Quadrant::HH || q == Quadrant::LH;
}
constexpr Quadrant flip_reliability(Quadrant q) {
  return make_quadrant(high_storage(q), !high_reliability(q));
}
constexpr std::size_t index_of(Quadrant q) { return static_cast<std::size_t>(q); }

std::string_view to_string(Quadrant q);
Quadrant quadrant_from_string(std::string_view s);

// Property values are either strings or numbers. Everything that gets hashed
// or indexed uses the canonical string: strings verbatim, numbers in the
// shortest decimal form that round-trips.
class PropertyValue {
 public:
  PropertyValue() = default;
  PropertyValue(std::string s) : value_(std::move(s)) {}
  PropertyValue(const char* s) : value_(std::string(s)) {}
  PropertyValue(double d) : value_(d) {}
  PropertyValue(int i) : value_(static_cast<double>(i)) {}

  bool is_number() const { return std::holds_alternative<double>(value_); }
  const std::string* as_string() const { return std::get_if<std::string>(&value_); }
  std::optional<double> as_number() const;
  std::string canonical() const;

  bool operator==(const PropertyValue&) const = default;

 private:
  std::variant<std::string, double> value_;
};

std::string canonical_number(double d);

struct Property {
  std::string name;
  PropertyValue value;

  bool operator==(const Property&) const = default;
};

// Stream metadata entries carry a static/dynamic flag; only static ones are
// indexed and searchable.
struct StreamProperty {
  std::string name;
  PropertyValue value;
  bool is_static = true;

  bool operator==(const StreamProperty&) const = default;
};

// A conjunctive query over canonical property values.
using QueryTerm = std::pair<std::string, std::string>;
using Query = std::vector<QueryTerm>;

Query make_query(const std::vector<Property>& props);

inline constexpr std::string_view kBlockIdProperty = "blockId";
inline constexpr std::string_view kStreamIdProperty = "streamId";

// Immutable shared byte buffer. Replicas of one block share storage in the
// in-memory store; copying a Payload never copies bytes.
class Payload {
 public:
  Payload() : bytes_(std::make_shared<const std::vector<std::uint8_t>>()) {}
  explicit Payload(std::vector<std::uint8_t> bytes)
      : bytes_(std::make_shared<const std::vector<std::uint8_t>>(std::move(bytes))) {}
  static Payload from_string(std::string_view s) {
    return Payload(std::vector<std::uint8_t>(s.begin(), s.end()));
  }

  std::size_t size() const { return bytes_->size(); }
  const std::uint8_t* data() const { return bytes_->data(); }
  const std::vector<std::uint8_t>& bytes() const { return *bytes_; }
  bool operator==(const Payload& o) const { return *bytes_ == *o.bytes_; }

 private:
  std::shared_ptr<const std::vector<std::uint8_t>> bytes_;
};

}  // namespace elfstore

template <class Tag>
struct std::hash<elfstore::Id<Tag>> {
  std::size_t operator()(const elfstore::Id<Tag>& id) const noexcept {
    return std::hash<std::int32_t>{}(id.value);
  }
};
