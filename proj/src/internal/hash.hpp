// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string_view>

namespace rubricjudge::detail {

// Stable across platforms and standard libraries, unlike std::hash.
inline std::uint64_t fnv1a(std::string_view text, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Order-sensitive combination of hashed fields; a field separator byte keeps
/// ("ab","c") and ("a","bc") apart.
class Hasher {
 public:
  explicit Hasher(std::uint64_t seed) : h_(splitmix64(seed)) {}
  Hasher& add(std::string_view field) {
    h_ = fnv1a(field, h_);
    h_ = fnv1a(std::string_view("\x1f", 1), h_);
    return *this;
  }
  [[nodiscard]] std::uint64_t value() const { return splitmix64(h_); }
  /// Uniform in [0, 1) with 53 bits of resolution.
  [[nodiscard]] double unit() const { return static_cast<double>(value() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t h_;
};

}  // namespace rubricjudge::detail
