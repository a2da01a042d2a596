#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace promptforge::numerics {

// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

// First eight digest bytes, little-endian.
std::uint64_t sha256_u64(std::string_view data);

}  // namespace promptforge::numerics
