#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "tagrpo/types.hpp"

namespace tagrpo {

// splitmix64 finalizer; good avalanche, cheap, and stable across platforms.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_tag(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

// Derives an independent stream seed from a base seed and a path of tags,
// e.g. derive_seed(run_seed, "rollout", step, slot, member). Every consumer of
// randomness owns a stream derived this way, so evaluation order never leaks
// into the results.
inline std::uint64_t derive_seed(std::uint64_t base) { return mix64(base); }

template <class Head, class... Rest>
std::uint64_t derive_seed(std::uint64_t base, Head head, Rest... rest) {
  std::uint64_t h;
  if constexpr (std::is_convertible_v<Head, std::string_view>)
    h = hash_tag(std::string_view(head));
  else
    h = static_cast<std::uint64_t>(head);
  return derive_seed(mix64(base ^ mix64(h)), rest...);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  double normal() { return std::normal_distribution<double>(0.0, 1.0)(eng_); }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(eng_); }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t integer(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(eng_);
  }

  Vector normal_vector(int n) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  Matrix normal_matrix(int rows, int cols) {
    Matrix m(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) m(r, c) = normal();
    return m;
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace tagrpo
