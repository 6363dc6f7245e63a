#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace explainrank {

/// The engine behind every random choice. mt19937_64's output sequence is
/// fixed by the standard, and the helpers below avoid the
/// implementation-defined std distributions, so results are identical
/// across standard libraries.
using Rng = std::mt19937_64;

/// Derives an independent seed for a named sub-stream of a master seed.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream);

/// Uniform integer in [0, n). n must be positive.
std::size_t uniform_index(Rng& rng, std::size_t n);

template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = uniform_index(rng, i);
    using std::swap;
    swap(items[i - 1], items[j]);
  }
}

}  // namespace explainrank
