#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

namespace sugvoxel {

struct Coord3 {
  std::int32_t x = 0;
  std::int32_t y = 0;
  std::int32_t z = 0;

  friend constexpr auto operator<=>(const Coord3&, const Coord3&) = default;

  constexpr Coord3 operator+(const Coord3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Coord3 operator-(const Coord3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Coord3 operator*(std::int32_t s) const { return {x * s, y * s, z * s}; }
};

// Open-addressed coordinate -> index map with linear probing. Coordinates
// must be non-negative and below 2^21 per axis; callers bounds-check first.
class CoordIndex {
 public:
  static constexpr std::uint64_t kEmpty = std::numeric_limits<std::uint64_t>::max();
  static constexpr std::size_t kNotFound = std::numeric_limits<std::size_t>::max();

  CoordIndex() = default;

  explicit CoordIndex(std::size_t expected) { reserve(expected); }

  void reserve(std::size_t expected) {
    std::size_t cap = 16;
    while (cap < expected * 2) cap <<= 1;
    if (cap <= keys_.size()) return;
    rehash(cap);
  }

  std::size_t size() const { return size_; }

  // Returns the existing index if present, otherwise inserts `value`.
  std::size_t insert(const Coord3& c, std::size_t value) {
    if ((size_ + 1) * 2 > keys_.size()) rehash(keys_.empty() ? 16 : keys_.size() * 2);
    const std::uint64_t key = pack(c);
    std::size_t slot = mix(key) & (keys_.size() - 1);
    while (true) {
      if (keys_[slot] == kEmpty) {
        keys_[slot] = key;
        values_[slot] = value;
        ++size_;
        return value;
      }
      if (keys_[slot] == key) return values_[slot];
      slot = (slot + 1) & (keys_.size() - 1);
    }
  }

  std::size_t find(const Coord3& c) const {
    if (keys_.empty()) return kNotFound;
    const std::uint64_t key = pack(c);
    std::size_t slot = mix(key) & (keys_.size() - 1);
    while (true) {
      if (keys_[slot] == kEmpty) return kNotFound;
      if (keys_[slot] == key) return values_[slot];
      slot = (slot + 1) & (keys_.size() - 1);
    }
  }

  static constexpr std::uint64_t pack(const Coord3& c) {
    return (static_cast<std::uint64_t>(c.x) << 42) | (static_cast<std::uint64_t>(c.y) << 21) |
           static_cast<std::uint64_t>(c.z);
  }

 private:
  // splitmix64 finalizer
  static constexpr std::uint64_t mix(std::uint64_t v) {
    v ^= v >> 30;
    v *= 0xbf58476d1ce4e5b9ULL;
    v ^= v >> 27;
    v *= 0x94d049bb133111ebULL;
    v ^= v >> 31;
    return v;
  }

  void rehash(std::size_t cap) {
    std::vector<std::uint64_t> old_keys = std::move(keys_);
    std::vector<std::size_t> old_values = std::move(values_);
    keys_.assign(cap, kEmpty);
    values_.assign(cap, 0);
    size_ = 0;
    for (std::size_t i = 0; i < old_keys.size(); ++i) {
      if (old_keys[i] == kEmpty) continue;
      std::size_t slot = mix(old_keys[i]) & (cap - 1);
      while (keys_[slot] != kEmpty) slot = (slot + 1) & (cap - 1);
      keys_[slot] = old_keys[i];
      values_[slot] = old_values[i];
      ++size_;
    }
  }

  std::vector<std::uint64_t> keys_;
  std::vector<std::size_t> values_;
  std::size_t size_ = 0;
};

}  // namespace sugvoxel
