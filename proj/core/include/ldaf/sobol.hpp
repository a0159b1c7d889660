#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ldaf/types.hpp"

namespace ldaf {

/// Gray-code Sobol generator with Joe-Kuo direction numbers, 32-bit
/// resolution. Points are produced as integers x; the real point is x / 2^32.
class SobolStream {
 public:
  static constexpr int kBits = 32;
  static int max_dim() noexcept;

  /// Starts at `first_index` (default 1: the all-zeros point 0 is skipped).
  explicit SobolStream(int dim, std::uint64_t first_index = 1);

  [[nodiscard]] int dim() const noexcept { return dim_; }
  [[nodiscard]] std::uint64_t index() const noexcept { return index_; }

  /// Writes the integer coordinates of the current point, then advances.
  void next(std::uint32_t* out);
  /// Same, scaled to [0, 1).
  void next(double* out);

  [[nodiscard]] std::uint32_t direction(int d, int bit) const {
    return directions_[static_cast<std::size_t>(d) * kBits + bit];
  }

 private:
  void advance();

  int dim_;
  std::uint64_t index_;
  std::vector<std::uint32_t> directions_;  // dim x kBits
  std::vector<std::uint32_t> state_;       // integer coordinates of point `index_`
};

/// count x dim Sobol points starting at index 1. With a digital shift
/// (one 32-bit word per dimension) the point is ((x ^ shift) + 0.5) / 2^32.
RowMatrix sobol_points(int dim, int count,
                       const std::optional<std::vector<std::uint32_t>>& shift = std::nullopt);

}  // namespace ldaf
