#pragma once

#include <cstddef>
#include <cstdint>

namespace liqlab::gf16 {

/// GF(2^16) with reduction polynomial x^16 + x^12 + x^3 + x + 1.
inline constexpr std::uint32_t kPoly = 0x1100B;
inline constexpr std::uint32_t kOrder = 65535;  // multiplicative group order

std::uint16_t mul(std::uint16_t a, std::uint16_t b);
std::uint16_t div(std::uint16_t a, std::uint16_t b);
std::uint16_t inv(std::uint16_t a);
std::uint16_t pow(std::uint16_t a, std::uint32_t e);
inline std::uint16_t add(std::uint16_t a, std::uint16_t b) { return a ^ b; }

/// Bitwise shift-and-reduce multiply, independent of the tables.
std::uint16_t mul_slow(std::uint16_t a, std::uint16_t b);

/// Checksum over the log and antilog tables, fixed for the polynomial.
std::uint64_t table_checksum();

/// dst[i] ^= c · src[i] over `lanes` 16-bit little-endian lanes.
void mul_add_region(std::uint8_t* dst, const std::uint8_t* src, std::uint16_t c, std::size_t lanes);
void mul_region(std::uint8_t* buf, std::uint16_t c, std::size_t lanes);

}  // namespace liqlab::gf16
