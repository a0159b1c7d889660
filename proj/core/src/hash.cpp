#include "ldaf/hash.hpp"

#include <openssl/evp.h>

#include "ldaf/error.hpp"

namespace ldaf {

Sha256Digest sha256(const void* data, std::size_t size) {
  Sha256Digest out{};
  unsigned int len = 0;
  require(EVP_Digest(data, size, out.data(), &len, EVP_sha256(), nullptr) == 1 && len == out.size(),
          ErrorKind::Numerical, "sha256: digest computation failed");
  return out;
}

std::string to_hex(const std::uint8_t* data, std::size_t size) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  s.reserve(2 * size);
  for (std::size_t i = 0; i < size; ++i) {
    s += kDigits[data[i] >> 4];
    s += kDigits[data[i] & 0xf];
  }
  return s;
}

}  // namespace ldaf
