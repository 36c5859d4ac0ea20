#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace vulbin {

// Lowercase hex SHA-256 digest (64 chars).
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

// 64-bit FNV-1a; used for deterministic seeding, never for identity.
constexpr std::uint64_t fnv1a64(std::string_view text) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace vulbin
