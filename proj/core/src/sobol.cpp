#include "ldaf/sobol.hpp"

#include <bit>
#include <string>

#include <boost/random/detail/sobol_table.hpp>

#include "ldaf/error.hpp"

namespace ldaf {

namespace {

using table = boost::random::detail::qrng_tables::sobol;

constexpr double kScale = 1.0 / 4294967296.0;

// Bratley-Fox recurrence on the Joe-Kuo initial numbers; v_j = m_j 2^{31-j}.
std::vector<std::uint32_t> build_directions(int dim) {
  constexpr int w = SobolStream::kBits;
  std::vector<std::uint32_t> v(static_cast<std::size_t>(dim) * w);
  for (int j = 0; j < w; ++j) v[j] = 1;
  for (int d = 1; d < dim; ++d) {
    std::uint32_t* m = v.data() + static_cast<std::size_t>(d) * w;
    const unsigned poly = table::polynomial(d - 1);
    const int degree = std::bit_width(poly) - 1;
    for (int k = 0; k < degree; ++k) m[k] = table::minit(d - 1, k);
    for (int j = degree; j < w; ++j) {
      unsigned p = poly;
      m[j] = m[j - degree];
      for (int k = 0; k < degree; ++k, p >>= 1) {
        const int rem = degree - k;
        m[j] ^= ((p & 1u) * m[j - rem]) << rem;
      }
    }
  }
  for (int d = 0; d < dim; ++d) {
    for (int j = 0; j < w; ++j) v[static_cast<std::size_t>(d) * w + j] <<= (w - 1 - j);
  }
  return v;
}

}  // namespace

int SobolStream::max_dim() noexcept { return static_cast<int>(table::max_dimension); }

SobolStream::SobolStream(int dim, std::uint64_t first_index)
    : dim_(dim), index_(first_index), state_(static_cast<std::size_t>(std::max(dim, 0)), 0u) {
  require(dim >= 1 && dim <= max_dim(), ErrorKind::InvalidArgument,
          "sobol: dimension must be in [1, " + std::to_string(max_dim()) + "]");
  require(first_index < (std::uint64_t{1} << kBits), ErrorKind::InvalidArgument,
          "sobol: index exceeds 2^32");
  directions_ = build_directions(dim);
  const std::uint64_t gray = first_index ^ (first_index >> 1);
  for (int b = 0; b < kBits; ++b) {
    if ((gray >> b) & 1u) {
      for (int d = 0; d < dim_; ++d) state_[d] ^= direction(d, b);
    }
  }
}

void SobolStream::advance() {
  require(index_ < (std::uint64_t{1} << kBits), ErrorKind::InvalidArgument,
          "sobol: sequence exhausted");
  ++index_;
  // Gray-code step: point index_ differs from its predecessor in bit ctz(index_).
  const int bit = std::countr_zero(index_);
  if (bit < kBits) {
    for (int d = 0; d < dim_; ++d) state_[d] ^= direction(d, bit);
  }
}

void SobolStream::next(std::uint32_t* out) {
  for (int d = 0; d < dim_; ++d) out[d] = state_[d];
  advance();
}

void SobolStream::next(double* out) {
  for (int d = 0; d < dim_; ++d) out[d] = static_cast<double>(state_[d]) * kScale;
  advance();
}

RowMatrix sobol_points(int dim, int count, const std::optional<std::vector<std::uint32_t>>& shift) {
  require(count >= 1, ErrorKind::InvalidArgument, "sobol_points: count must be positive");
  if (shift) {
    require(static_cast<int>(shift->size()) == dim, ErrorKind::ShapeMismatch,
            "sobol_points: shift must have one word per dimension");
  }
  SobolStream stream(dim);
  RowMatrix out(count, dim);
  std::vector<std::uint32_t> x(static_cast<std::size_t>(dim));
  for (int i = 0; i < count; ++i) {
    stream.next(x.data());
    for (int d = 0; d < dim; ++d) {
      out(i, d) = shift ? (static_cast<double>(x[d] ^ (*shift)[d]) + 0.5) * kScale
                        : static_cast<double>(x[d]) * kScale;
    }
  }
  return out;
}

}  // namespace ldaf
