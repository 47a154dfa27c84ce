#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>

namespace snella {

inline constexpr std::uint64_t fnv_offset = 0xcbf29ce484222325ULL;

inline std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t h = fnv_offset) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Hashes the little-endian bytes of each value.
inline std::uint64_t fnv1a(std::span<const double> values, std::uint64_t h = fnv_offset) {
    for (double v : values) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        unsigned char le[8];
        for (int i = 0; i < 8; ++i) le[i] = static_cast<unsigned char>(bits >> (8 * i));
        h = fnv1a(std::span<const unsigned char>(le, 8), h);
    }
    return h;
}

}  // namespace snella
