#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace codecomp {

using Md5Digest = std::array<std::uint8_t, 16>;

/// RFC 1321 digest of the raw bytes of `data`.
Md5Digest md5(std::string_view data);
std::string md5_hex(std::string_view data);

}  // namespace codecomp
