#include "liqlab/flow_codec.hpp"

#include <algorithm>
#include <cstring>
#include <set>
#include <string>

#include "liqlab/gf16.hpp"

namespace liqlab {

namespace {

std::uint16_t read_lane(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void check_symbols(const std::vector<Bytes>& symbols) {
  if (symbols.empty()) return;
  const auto len = symbols.front().size();
  if (len % 2 != 0) throw std::invalid_argument("symbol length must be even (16-bit lanes)");
  for (const auto& s : symbols)
    if (s.size() != len) throw std::invalid_argument("symbol length mismatch");
}

}  // namespace

CauchyCode::CauchyCode(int n, int k) : n_(n), k_(k) {
  if (!(0 < k && k < n)) throw std::invalid_argument("code requires 0 < k < n");
  if (n > 65535) throw std::invalid_argument("GF(2^16) supports n <= 65535");
}

std::uint16_t CauchyCode::coefficient(int efi, int j) const {
  return gf16::inv(static_cast<std::uint16_t>(efi ^ j));
}

std::vector<Bytes> CauchyCode::encode_block(const std::vector<Bytes>& source,
                                            const std::vector<int>& efis) const {
  if (static_cast<int>(source.size()) != k_)
    throw std::invalid_argument("encode_block needs exactly k source symbols");
  check_symbols(source);
  const std::size_t len = source.front().size();
  std::vector<Bytes> out;
  out.reserve(efis.size());
  for (int efi : efis) {
    if (efi < 0 || efi >= n_) throw std::invalid_argument("EFI out of range");
    if (efi < k_) {
      out.push_back(source[efi]);
      continue;
    }
    Bytes sym(len, 0);
    for (int j = 0; j < k_; ++j)
      gf16::mul_add_region(sym.data(), source[j].data(), coefficient(efi, j), len / 2);
    out.push_back(std::move(sym));
  }
  return out;
}

std::vector<Bytes> CauchyCode::decode_block(
    const std::vector<std::pair<int, Bytes>>& received) const {
  std::set<int> seen;
  std::vector<const std::pair<int, Bytes>*> chosen;
  for (const auto& pr : received) {
    if (pr.first < 0 || pr.first >= n_) throw std::invalid_argument("EFI out of range");
    if (!seen.insert(pr.first).second) throw std::invalid_argument("duplicate EFI in decode input");
    if (static_cast<int>(chosen.size()) < k_) chosen.push_back(&pr);
  }
  if (static_cast<int>(chosen.size()) < k_)
    throw std::invalid_argument("decode needs at least k distinct fragments, got " +
                                std::to_string(chosen.size()));
  const std::size_t len = chosen.front()->second.size();
  if (len % 2 != 0) throw std::invalid_argument("symbol length must be even (16-bit lanes)");
  for (const auto* p : chosen)
    if (p->second.size() != len) throw std::invalid_argument("symbol length mismatch");
  const std::size_t lanes = len / 2;

  std::vector<Bytes> out(k_);
  std::vector<bool> have(k_, false);
  std::vector<const Bytes*> repair_syms;
  std::vector<int> repair_efis;
  for (const auto* p : chosen) {
    if (p->first < k_) {
      out[p->first] = p->second;
      have[p->first] = true;
    } else {
      repair_efis.push_back(p->first);
      repair_syms.push_back(&p->second);
    }
  }
  std::vector<int> missing;
  for (int j = 0; j < k_; ++j)
    if (!have[j]) missing.push_back(j);
  const std::size_t m = missing.size();
  if (m == 0) return out;

  // Right-hand sides with the known source contribution removed.
  std::vector<Bytes> rhs(m);
  for (std::size_t a = 0; a < m; ++a) {
    rhs[a] = *repair_syms[a];
    for (int j = 0; j < k_; ++j)
      if (have[j])
        gf16::mul_add_region(rhs[a].data(), out[j].data(), coefficient(repair_efis[a], j), lanes);
  }
  // m x m Cauchy submatrix, rows stored as little-endian lanes.
  std::vector<Bytes> mat(m, Bytes(2 * m));
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b) {
      const std::uint16_t c = coefficient(repair_efis[a], missing[b]);
      mat[a][2 * b] = static_cast<std::uint8_t>(c);
      mat[a][2 * b + 1] = static_cast<std::uint8_t>(c >> 8);
    }
  for (std::size_t p = 0; p < m; ++p) {
    std::size_t piv = p;
    while (piv < m && read_lane(&mat[piv][2 * p]) == 0) ++piv;
    if (piv == m) throw std::logic_error("singular decoding matrix: code defect");
    std::swap(mat[p], mat[piv]);
    std::swap(rhs[p], rhs[piv]);
    const std::uint16_t scale = gf16::inv(read_lane(&mat[p][2 * p]));
    gf16::mul_region(&mat[p][2 * p], scale, m - p);
    gf16::mul_region(rhs[p].data(), scale, lanes);
    for (std::size_t q = 0; q < m; ++q) {
      if (q == p) continue;
      const std::uint16_t f = read_lane(&mat[q][2 * p]);
      if (f == 0) continue;
      gf16::mul_add_region(&mat[q][2 * p], &mat[p][2 * p], f, m - p);
      gf16::mul_add_region(rhs[q].data(), rhs[p].data(), f, lanes);
    }
  }
  for (std::size_t b = 0; b < m; ++b) out[missing[b]] = std::move(rhs[b]);
  return out;
}

ObjectLayout ObjectLayout::make(std::uint64_t object_size, int k, std::uint32_t symbol_size) {
  if (object_size == 0) throw std::invalid_argument("object size must be positive");
  if (k < 1) throw std::invalid_argument("k must be positive");
  if (symbol_size == 0 || symbol_size % 2 != 0)
    throw std::invalid_argument("symbol size must be a positive even number of bytes");
  ObjectLayout l;
  l.object_size = object_size;
  l.k = k;
  l.symbol_size = symbol_size;
  const std::uint64_t bsize = l.block_size();
  l.block_count = (object_size + bsize - 1) / bsize;
  l.padded_size = l.block_count * bsize;
  return l;
}

std::map<int, Bytes> make_fragments(const Bytes& object, const ObjectLayout& layout,
                                    const CauchyCode& code, const std::vector<int>& efis) {
  if (object.size() != layout.object_size)
    throw std::invalid_argument("object length does not match the layout");
  if (code.k() != layout.k) throw std::invalid_argument("code and layout disagree on k");
  for (int efi : efis)
    if (efi < 0 || efi >= code.n()) throw std::invalid_argument("EFI out of range");
  const std::uint32_t ss = layout.symbol_size;
  const std::size_t lanes = ss / 2;
  std::map<int, Bytes> out;
  for (int efi : efis) out[efi].assign(layout.fragment_size(), 0);
  std::vector<std::uint16_t> coeffs(static_cast<std::size_t>(layout.k));
  Bytes block(layout.block_size());
  for (std::uint64_t b = 0; b < layout.block_count; ++b) {
    const std::uint64_t base = b * layout.block_size();
    std::fill(block.begin(), block.end(), 0);
    if (base < object.size()) {
      const auto take = std::min<std::uint64_t>(layout.block_size(), object.size() - base);
      std::memcpy(block.data(), object.data() + base, take);
    }
    for (auto& [efi, frag] : out) {
      std::uint8_t* dst = frag.data() + b * ss;
      if (efi < layout.k) {
        std::memcpy(dst, block.data() + static_cast<std::size_t>(efi) * ss, ss);
        continue;
      }
      for (int j = 0; j < layout.k; ++j)
        gf16::mul_add_region(dst, block.data() + static_cast<std::size_t>(j) * ss,
                             code.coefficient(efi, j), lanes);
    }
  }
  return out;
}

Bytes make_fragment(const Bytes& object, const ObjectLayout& layout, const CauchyCode& code,
                    int efi) {
  return std::move(make_fragments(object, layout, code, {efi}).begin()->second);
}

Bytes reconstruct_object(const std::map<int, Bytes>& fragments, const ObjectLayout& layout,
                         const CauchyCode& code) {
  if (static_cast<int>(fragments.size()) < layout.k)
    throw std::invalid_argument("not enough fragments to reconstruct the object");
  for (const auto& [efi, frag] : fragments)
    if (frag.size() != layout.fragment_size())
      throw std::invalid_argument("fragment " + std::to_string(efi) + " has the wrong size");
  const std::uint32_t ss = layout.symbol_size;
  Bytes object(layout.padded_size);
  std::vector<std::pair<int, Bytes>> recv;
  recv.reserve(layout.k);
  for (std::uint64_t b = 0; b < layout.block_count; ++b) {
    recv.clear();
    for (const auto& [efi, frag] : fragments) {
      recv.emplace_back(efi, Bytes(frag.begin() + b * ss, frag.begin() + (b + 1) * ss));
      if (static_cast<int>(recv.size()) == layout.k) break;
    }
    const auto src = code.decode_block(recv);
    for (int j = 0; j < layout.k; ++j)
      std::memcpy(object.data() + b * layout.block_size() + static_cast<std::size_t>(j) * ss,
                  src[j].data(), ss);
  }
  object.resize(layout.object_size);
  return object;
}

const char* to_string(AccessMode m) {
  switch (m) {
    case AccessMode::Liq: return "liq";
    case AccessMode::SC: return "sc";
    case AccessMode::SCDeg: return "scdeg";
  }
  return "?";
}

AccessPlan plan_chunk_access(std::uint64_t offset, std::uint64_t length, const ObjectLayout& layout,
                             const AccessConfig& cfg) {
  if (length == 0) throw std::invalid_argument("chunk length must be positive");
  if (offset + length > layout.padded_size) throw std::invalid_argument("chunk exceeds the object");
  auto up = [&](int efi) {
    return cfg.available.empty() || (efi < static_cast<int>(cfg.available.size()) && cfg.available[efi]);
  };
  AccessPlan plan;
  plan.mode = cfg.mode;
  if (cfg.mode == AccessMode::Liq) {
    const int want = layout.k + cfg.extra;
    if (cfg.extra < 0 || want > cfg.n) throw std::invalid_argument("k + E must not exceed n");
    const std::uint64_t bsize = layout.block_size();
    if (offset % bsize != 0 || length % bsize != 0)
      throw std::invalid_argument("flow chunk must be aligned to the block size");
    plan.first_block = offset / bsize;
    plan.block_count = length / bsize;
    const std::uint64_t portion = plan.block_count * layout.symbol_size;
    for (int efi = 0; efi < cfg.n && static_cast<int>(plan.requests.size()) < want; ++efi)
      if (up(efi)) plan.requests.push_back({efi, plan.first_block * layout.symbol_size, portion});
    if (static_cast<int>(plan.requests.size()) < layout.k)
      throw std::runtime_error("fewer than k fragments available");
  } else {
    if (!(0 < cfg.block_k && cfg.block_k < cfg.block_n))
      throw std::invalid_argument("block organization needs 0 < block_k < block_n");
    const std::uint64_t frag = layout.object_size / cfg.block_k;
    if (frag * cfg.block_k != layout.object_size)
      throw std::invalid_argument("object size must divide into block_k fragments");
    const int owner = static_cast<int>(offset / frag);
    const std::uint64_t within = offset % frag;
    if (within + length > frag) throw std::invalid_argument("chunk spans two block fragments");
    if (cfg.mode == AccessMode::SC) {
      if (!up(owner)) throw OwnerUnavailable("owning fragment unavailable; use a degraded read");
      plan.requests.push_back({owner, within, length});
    } else {
      for (int efi = 0; efi < cfg.block_n && static_cast<int>(plan.requests.size()) < cfg.block_k;
           ++efi)
        if (efi != owner && up(efi)) plan.requests.push_back({efi, within, length});
      if (static_cast<int>(plan.requests.size()) < cfg.block_k)
        throw std::runtime_error("fewer than k fragments available for a degraded read");
    }
  }
  for (const auto& r : plan.requests) plan.total_read += r.length;
  plan.amplification = static_cast<double>(plan.total_read) / static_cast<double>(length);
  return plan;
}

}  // namespace liqlab
