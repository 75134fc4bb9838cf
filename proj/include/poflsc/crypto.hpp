#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "poflsc/types.hpp"

namespace poflsc {

Digest sha256(std::span<const std::uint8_t> bytes);
Digest sha256(std::string_view text);

std::string to_hex(std::span<const std::uint8_t> bytes);
Digest digest_from_hex(std::string_view hex);

// First eight digest bytes read big-endian; used to key seed streams by content.
std::uint64_t digest_prefix(const Digest& d);

}  // namespace poflsc
