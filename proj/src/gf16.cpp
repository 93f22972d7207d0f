#include "liqlab/gf16.hpp"

#include <array>
#include <stdexcept>
#include <vector>

namespace liqlab::gf16 {

namespace {

struct Tables {
  std::vector<std::uint16_t> exp;  // doubled so log sums need no reduction
  std::vector<std::uint32_t> log;

  Tables() : exp(2 * kOrder + 2), log(65536) {
    std::uint32_t x = 1;
    for (std::uint32_t i = 0; i < kOrder; ++i) {
      exp[i] = static_cast<std::uint16_t>(x);
      log[x] = i;
      x <<= 1;
      if (x & 0x10000) x ^= kPoly;
    }
    if (x != 1) throw std::logic_error("GF(2^16) generator does not have full order");
    for (std::uint32_t i = kOrder; i < exp.size(); ++i) exp[i] = exp[i - kOrder];
    log[0] = 0;
  }
};

const Tables& tables() {
  static const Tables t;
  return t;
}

inline std::uint16_t load(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline void store(std::uint8_t* p, std::uint16_t v) {
  p[0] = static_cast<std::uint8_t>(v);
  p[1] = static_cast<std::uint8_t>(v >> 8);
}

}  // namespace

std::uint16_t mul(std::uint16_t a, std::uint16_t b) {
  if (a == 0 || b == 0) return 0;
  const auto& t = tables();
  return t.exp[t.log[a] + t.log[b]];
}

std::uint16_t inv(std::uint16_t a) {
  if (a == 0) throw std::domain_error("zero has no inverse in GF(2^16)");
  const auto& t = tables();
  return t.exp[kOrder - t.log[a]];
}

std::uint16_t div(std::uint16_t a, std::uint16_t b) {
  if (b == 0) throw std::domain_error("division by zero in GF(2^16)");
  if (a == 0) return 0;
  const auto& t = tables();
  return t.exp[t.log[a] + kOrder - t.log[b]];
}

std::uint16_t pow(std::uint16_t a, std::uint32_t e) {
  if (e == 0) return 1;
  if (a == 0) return 0;
  const auto& t = tables();
  return t.exp[static_cast<std::uint64_t>(t.log[a]) * e % kOrder];
}

std::uint16_t mul_slow(std::uint16_t a, std::uint16_t b) {
  std::uint32_t acc = 0;
  std::uint32_t x = a;
  for (int i = 0; i < 16; ++i) {
    if (b & (1u << i)) acc ^= x;
    x <<= 1;
    if (x & 0x10000) x ^= kPoly;
  }
  return static_cast<std::uint16_t>(acc);
}

std::uint64_t table_checksum() {
  const auto& t = tables();
  std::uint64_t h = 1469598103934665603ULL;
  for (std::uint32_t i = 0; i < kOrder; ++i) {
    h = (h ^ t.exp[i]) * 1099511628211ULL;
    h = (h ^ t.log[i + 1]) * 1099511628211ULL;
  }
  return h;
}

void mul_add_region(std::uint8_t* dst, const std::uint8_t* src, std::uint16_t c, std::size_t lanes) {
  if (c == 0) return;
  const auto& t = tables();
  if (c == 1) {
    for (std::size_t i = 0; i < 2 * lanes; ++i) dst[i] ^= src[i];
    return;
  }
  const std::uint32_t lc = t.log[c];
  for (std::size_t i = 0; i < lanes; ++i) {
    const std::uint16_t s = load(src + 2 * i);
    if (s == 0) continue;
    store(dst + 2 * i, load(dst + 2 * i) ^ t.exp[t.log[s] + lc]);
  }
}

void mul_region(std::uint8_t* buf, std::uint16_t c, std::size_t lanes) {
  for (std::size_t i = 0; i < lanes; ++i) store(buf + 2 * i, mul(load(buf + 2 * i), c));
}

}  // namespace liqlab::gf16
