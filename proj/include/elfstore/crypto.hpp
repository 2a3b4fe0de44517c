// SPDX-License-Identifier: Apache-2.0
//
// Thin wrappers over libcrypto digests and base64.

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace elfstore::crypto {

using Sha1Digest = std::array<std::uint8_t, 20>;

Sha1Digest sha1(std::span<const std::uint8_t> bytes);
Sha1Digest sha1(std::string_view text);

// Lowercase hex MD5.
std::string md5_hex(std::span<const std::uint8_t> bytes);
std::string md5_hex(std::string_view text);

std::string base64_encode(std::span<const std::uint8_t> bytes);
// Throws Error(protocol) on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace elfstore::crypto
