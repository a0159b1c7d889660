#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace ldaf {

using Sha256Digest = std::array<std::uint8_t, 32>;

Sha256Digest sha256(const void* data, std::size_t size);
inline Sha256Digest sha256(std::string_view s) { return sha256(s.data(), s.size()); }

std::string to_hex(const std::uint8_t* data, std::size_t size);
inline std::string to_hex(const Sha256Digest& d) { return to_hex(d.data(), d.size()); }

}  // namespace ldaf
