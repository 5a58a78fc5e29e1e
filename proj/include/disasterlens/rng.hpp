#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace disasterlens {

using Rng = std::mt19937_64;

// Mixes a master seed with a stream name and up to two indices into an
// independent seed, so every random consumer (split, shuffle, augmentation,
// init) draws from its own named stream.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream, std::uint64_t a = 0,
                          std::uint64_t b = 0);

inline Rng make_rng(std::uint64_t master, std::string_view stream, std::uint64_t a = 0,
                    std::uint64_t b = 0) {
  return Rng(derive_seed(master, stream, a, b));
}

// The helpers below depend only on the engine's raw output, not on the
// standard library's distribution implementations.

// Uniform in [0, 1).
double uniform01(Rng& rng);

// Uniform integer in [0, n), n >= 1.
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

// Uniform integer in [lo, hi].
std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi);

double standard_normal(Rng& rng);

bool coin_flip(Rng& rng);

template <class T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_index(rng, i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace disasterlens
