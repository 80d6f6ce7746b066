#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace pcc {

// Frequency resolution of the coding models: pmf rows are quantized to
// cumulative 16-bit counts with at least one count per symbol, identically on
// both sides, so encoder and decoder share an exact model.
constexpr uint32_t kFreqBits = 16;
constexpr uint32_t kFreqTotal = 1u << kFreqBits;

// One symbol row quantized for coding.
struct PmfTable {
  std::vector<uint32_t> cum;  // size L+1, cum[0]=0, cum[L]=kFreqTotal

  static PmfTable from_pmf(std::span<const double> pmf);

  uint32_t freq(size_t s) const { return cum[s + 1] - cum[s]; }
  size_t symbols() const { return cum.size() - 1; }
  // Model code length of one symbol in bits.
  double bits(size_t s) const;
  // Largest s with cum[s] <= target.
  size_t find(uint32_t target) const;
};

// 32-bit range coder, byte-wise renormalization. Carries propagate directly
// into the in-memory output buffer. An empty symbol stream costs zero bytes;
// a nonempty one flushes exactly four.
class RangeEncoder {
 public:
  void encode(const PmfTable& model, size_t symbol);
  std::vector<uint8_t> finish();

 private:
  void shift_out();
  uint64_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  bool any_ = false;
  std::vector<uint8_t> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const uint8_t> bytes) : data_(bytes) {}
  size_t decode(const PmfTable& model);

 private:
  uint8_t next_byte();
  std::span<const uint8_t> data_;
  size_t pos_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  uint32_t code_ = 0;
  bool primed_ = false;
};

// Whole-stream helpers over quantized models; models[i] drives symbols[i].
std::vector<uint8_t> ac_encode(std::span<const uint8_t> symbols,
                               std::span<const PmfTable> models);
std::vector<uint8_t> ac_decode(std::span<const uint8_t> bytes,
                               std::span<const PmfTable> models);

// Raw-pmf entry points: pmfs is row-major N x L, one row per symbol. Both
// sides quantize rows identically. Encoding a symbol whose raw probability is
// not positive is rejected; callers floor their pmfs first.
std::vector<PmfTable> build_pmf_tables(std::span<const double> pmfs, size_t count, size_t L);
std::vector<uint8_t> ac_encode(std::span<const uint8_t> symbols, std::span<const double> pmfs,
                               size_t L);
std::vector<uint8_t> ac_decode(std::span<const uint8_t> bytes, std::span<const double> pmfs,
                               size_t count, size_t L);

}  // namespace pcc
