#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fovea/common.hpp"

namespace fovea {

/// Sylvester-ordered Hadamard basis of order N = 2^k.
///
/// Row n, column j holds (-1)^popcount(n & j). Row 0 is the all-ones
/// vector and rows satisfy dot(h_n, h_m) = N * delta_nm. Entries are
/// evaluated on demand; the object is immutable and cheap to copy.
class HadamardBasis {
 public:
  explicit HadamardBasis(std::size_t order) : order_(order) {
    if (!is_power_of_two(order))
      throw InvalidArgument("Hadamard order must be a power of two (Sylvester construction), got " +
                            std::to_string(order));
  }

  std::size_t order() const noexcept { return order_; }

  int entry(std::size_t row, std::size_t col) const noexcept {
    return (std::popcount(row & col) & 1U) ? -1 : 1;
  }

  std::vector<std::int8_t> row(std::size_t n) const {
    require(n < order_, "Hadamard row index out of range");
    std::vector<std::int8_t> r(order_);
    for (std::size_t j = 0; j < order_; ++j) r[j] = static_cast<std::int8_t>(entry(n, j));
    return r;
  }

  /// Dense row-major N x N matrix; intended for oracles and small orders.
  std::vector<std::int8_t> dense() const {
    std::vector<std::int8_t> m(order_ * order_);
    for (std::size_t i = 0; i < order_; ++i)
      for (std::size_t j = 0; j < order_; ++j) m[i * order_ + j] = static_cast<std::int8_t>(entry(i, j));
    return m;
  }

 private:
  std::size_t order_;
};

inline HadamardBasis build_basis(std::size_t order) { return HadamardBasis(order); }

/// In-place fast Walsh-Hadamard transform in natural (Sylvester) order: v <- H v.
template <typename T>
void fwht_inplace(std::span<T> v) {
  const std::size_t n = v.size();
  if (!is_power_of_two(n)) throw InvalidArgument("fwht: length must be a power of two, got " + std::to_string(n));
  for (std::size_t h = 1; h < n; h <<= 1) {
    for (std::size_t i = 0; i < n; i += h << 1) {
      for (std::size_t j = i; j < i + h; ++j) {
        const T a = v[j];
        const T b = v[j + h];
        v[j] = a + b;
        v[j + h] = a - b;
      }
    }
  }
}

inline std::vector<double> fwht(std::vector<double> v) {
  fwht_inplace(std::span<double>(v));
  return v;
}

/// {1,0} mask pair emulating a +-1 mask by subtraction of detector readings.
struct DifferentialPatternPair {
  std::vector<std::uint8_t> positive;
  std::vector<std::uint8_t> negative;
};

template <typename Sign>
DifferentialPatternPair to_differential(std::span<const Sign> mask) {
  DifferentialPatternPair pair;
  pair.positive.resize(mask.size());
  pair.negative.resize(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] == Sign{1}) {
      pair.positive[i] = 1;
    } else if (mask[i] == Sign{-1}) {
      pair.negative[i] = 1;
    } else {
      throw InvalidArgument("to_differential: mask entries must be +1 or -1 (index " + std::to_string(i) + ")");
    }
  }
  return pair;
}

inline DifferentialPatternPair to_differential(const std::vector<std::int8_t>& mask) {
  return to_differential(std::span<const std::int8_t>(mask));
}

constexpr double differential_decode(double i_pos, double i_neg) noexcept { return i_pos - i_neg; }

}  // namespace fovea
