#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace coc {

// Deterministic draws built directly on mt19937_64 output. The standard
// distributions are implementation-defined, which would let corpora and
// training histories drift across standard libraries; these do not.

inline double uniform01(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline double uniform_range(std::mt19937_64& g, double lo, double hi) {
  return lo + (hi - lo) * uniform01(g);
}

// Inclusive on both ends.
inline int uniform_int(std::mt19937_64& g, int lo, int hi) {
  const uint64_t span = static_cast<uint64_t>(hi - lo) + 1u;
  return lo + static_cast<int>(g() % span);
}

// Box-Muller, one value per call (the pair's second half is discarded so the
// draw count per sample is fixed).
inline double gaussian(std::mt19937_64& g) {
  const double u1 = (static_cast<double>(g() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
  const double u2 = uniform01(g);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

template <typename T>
void shuffle_indices(std::vector<T>& v, std::mt19937_64& g) {
  for (size_t i = v.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(g() % i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace coc
