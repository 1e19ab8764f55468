#pragma once

#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

namespace brood {

/// Fixed-capacity set of node indices backed by `Words` 64-bit words.
///
/// Used for parent sets, allowed-parent sets of a search space and any other
/// node subset. Capacity is `64 * Words`; indices outside it are a caller bug.
template <std::size_t Words>
class BasicNodeSet {
 public:
  static constexpr std::size_t kCapacity = 64 * Words;

  constexpr BasicNodeSet() = default;

  static constexpr BasicNodeSet single(int node) {
    BasicNodeSet s;
    s.insert(node);
    return s;
  }

  /// All nodes 0..n-1.
  static constexpr BasicNodeSet range(int n) {
    BasicNodeSet s;
    for (int i = 0; i < n; ++i) s.insert(i);
    return s;
  }

  constexpr bool contains(int node) const {
    return (words_[word(node)] >> bit(node)) & 1u;
  }
  constexpr void insert(int node) { words_[word(node)] |= mask(node); }
  constexpr void erase(int node) { words_[word(node)] &= ~mask(node); }

  constexpr int size() const {
    int n = 0;
    for (auto w : words_) n += std::popcount(w);
    return n;
  }
  constexpr bool empty() const {
    for (auto w : words_)
      if (w) return false;
    return true;
  }

  constexpr bool is_subset_of(const BasicNodeSet& other) const {
    for (std::size_t k = 0; k < Words; ++k)
      if (words_[k] & ~other.words_[k]) return false;
    return true;
  }
  constexpr bool intersects(const BasicNodeSet& other) const {
    for (std::size_t k = 0; k < Words; ++k)
      if (words_[k] & other.words_[k]) return true;
    return false;
  }

  constexpr BasicNodeSet operator|(const BasicNodeSet& o) const {
    BasicNodeSet r;
    for (std::size_t k = 0; k < Words; ++k) r.words_[k] = words_[k] | o.words_[k];
    return r;
  }
  constexpr BasicNodeSet operator&(const BasicNodeSet& o) const {
    BasicNodeSet r;
    for (std::size_t k = 0; k < Words; ++k) r.words_[k] = words_[k] & o.words_[k];
    return r;
  }
  /// Set difference.
  constexpr BasicNodeSet operator-(const BasicNodeSet& o) const {
    BasicNodeSet r;
    for (std::size_t k = 0; k < Words; ++k) r.words_[k] = words_[k] & ~o.words_[k];
    return r;
  }
  constexpr BasicNodeSet& operator|=(const BasicNodeSet& o) { return *this = *this | o; }
  constexpr BasicNodeSet& operator&=(const BasicNodeSet& o) { return *this = *this & o; }

  constexpr bool operator==(const BasicNodeSet&) const = default;
  constexpr auto operator<=>(const BasicNodeSet&) const = default;

  /// Calls f(node) for each member in ascending order.
  template <typename F>
  constexpr void for_each(F&& f) const {
    for (std::size_t k = 0; k < Words; ++k) {
      std::uint64_t w = words_[k];
      while (w) {
        const int b = std::countr_zero(w);
        f(static_cast<int>(64 * k) + b);
        w &= w - 1;
      }
    }
  }

  std::vector<int> to_vector() const {
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(size()));
    for_each([&](int v) { out.push_back(v); });
    return out;
  }

  template <typename Range>
  static BasicNodeSet from(const Range& nodes) {
    BasicNodeSet s;
    for (int v : nodes) s.insert(v);
    return s;
  }

  std::size_t hash() const {
    std::size_t h = 0;
    for (auto w : words_) h = h * 0x9E3779B97F4A7C15ull + std::hash<std::uint64_t>{}(w);
    return h;
  }

 private:
  static constexpr std::size_t word(int node) { return static_cast<std::size_t>(node) / 64; }
  static constexpr int bit(int node) { return node % 64; }
  static constexpr std::uint64_t mask(int node) { return std::uint64_t{1} << bit(node); }

  std::array<std::uint64_t, Words> words_{};
};

using NodeSet = BasicNodeSet<4>;

inline constexpr int kMaxNodes = static_cast<int>(NodeSet::kCapacity);

}  // namespace brood

template <std::size_t W>
struct std::hash<brood::BasicNodeSet<W>> {
  std::size_t operator()(const brood::BasicNodeSet<W>& s) const { return s.hash(); }
};
