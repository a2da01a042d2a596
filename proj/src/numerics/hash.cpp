#include "promptforge/numerics/hash.hpp"

#include <openssl/sha.h>

#include <array>

namespace promptforge::numerics {

namespace {
std::array<unsigned char, SHA256_DIGEST_LENGTH> digest(std::string_view data) {
  std::array<unsigned char, SHA256_DIGEST_LENGTH> out{};
  SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), out.data());
  return out;
}
}  // namespace

std::string sha256_hex(std::string_view data) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  s.reserve(2 * SHA256_DIGEST_LENGTH);
  for (unsigned char b : digest(data)) {
    s.push_back(kHex[b >> 4]);
    s.push_back(kHex[b & 0xF]);
  }
  return s;
}

std::uint64_t sha256_u64(std::string_view data) {
  const auto d = digest(data);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | d[static_cast<std::size_t>(i)];
  return v;
}

}  // namespace promptforge::numerics
