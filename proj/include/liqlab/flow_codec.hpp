#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

namespace liqlab {

using Bytes = std::vector<std::uint8_t>;

/// Systematic MDS code over GF(2^16) with a Cauchy parity block.
/// EFIs 0..k-1 are source symbols; EFI i >= k is sum_j (i xor j)^-1 · s_j.
class CauchyCode {
 public:
  CauchyCode(int n, int k);

  int n() const { return n_; }
  int k() const { return k_; }
  std::uint16_t coefficient(int efi, int j) const;

  /// Symbols for the requested EFIs from k equally sized source symbols.
  std::vector<Bytes> encode_block(const std::vector<Bytes>& source,
                                  const std::vector<int>& efis) const;

  /// Recovers the k source symbols from at least k distinct (efi, symbol)
  /// pairs. Only the first k distinct pairs are used.
  std::vector<Bytes> decode_block(const std::vector<std::pair<int, Bytes>>& received) const;

 private:
  int n_;
  int k_;
};

/// Flow organization of one object: N source blocks of k symbols each;
/// fragment i is symbol i of every block, concatenated.
struct ObjectLayout {
  std::uint64_t object_size = 0;  // true length
  std::uint64_t padded_size = 0;  // multiple of block_size
  int k = 0;
  std::uint32_t symbol_size = 0;
  std::uint64_t block_count = 0;

  static ObjectLayout make(std::uint64_t object_size, int k, std::uint32_t symbol_size);
  std::uint64_t block_size() const { return static_cast<std::uint64_t>(k) * symbol_size; }
  std::uint64_t fragment_size() const { return block_count * symbol_size; }
};

/// Zero-pads `object` to the layout and extracts fragment `efi`.
Bytes make_fragment(const Bytes& object, const ObjectLayout& layout, const CauchyCode& code,
                    int efi);

/// Encodes every requested fragment in one pass over the blocks.
std::map<int, Bytes> make_fragments(const Bytes& object, const ObjectLayout& layout,
                                    const CauchyCode& code, const std::vector<int>& efis);

/// Rebuilds the object (truncated to its true length) from at least k
/// fragments.
Bytes reconstruct_object(const std::map<int, Bytes>& fragments, const ObjectLayout& layout,
                         const CauchyCode& code);

enum class AccessMode { Liq, SC, SCDeg };

struct AccessRequest {
  int efi;
  std::uint64_t offset;  // within the fragment
  std::uint64_t length;
};

struct AccessPlan {
  AccessMode mode;
  std::uint64_t first_block = 0;  // flow organization only
  std::uint64_t block_count = 0;
  std::vector<AccessRequest> requests;
  std::uint64_t total_read = 0;
  double amplification = 0.0;
};

struct AccessConfig {
  AccessMode mode = AccessMode::Liq;
  int n = 0;            // flow code length
  int extra = 0;        // E, additional fragment portions requested
  int block_k = 0;      // block organization (small code) parameters
  int block_n = 0;
  std::vector<bool> available;  // per EFI; empty means all available
};

/// Raised when the fragment that owns a chunk is on an unavailable node;
/// the caller should fall back to a degraded read.
struct OwnerUnavailable : std::runtime_error {
  using std::runtime_error::runtime_error;
};

AccessPlan plan_chunk_access(std::uint64_t offset, std::uint64_t length, const ObjectLayout& layout,
                             const AccessConfig& cfg);

const char* to_string(AccessMode m);

}  // namespace liqlab
