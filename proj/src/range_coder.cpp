#include "pcc/range_coder.h"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>

#include "pcc/common.h"

namespace pcc {

namespace {
constexpr uint32_t kTopValue = 1u << 24;
}

PmfTable PmfTable::from_pmf(std::span<const double> pmf) {
  const size_t L = pmf.size();
  if (L < 1 || L > kFreqTotal) throw std::invalid_argument("pmf: bad symbol count");
  std::vector<uint32_t> counts(L);
  uint64_t total = 0;
  for (size_t i = 0; i < L; ++i) {
    const double p = std::max(pmf[i], 0.0);
    counts[i] = std::max<uint32_t>(1, static_cast<uint32_t>(std::lround(p * kFreqTotal)));
    total += counts[i];
  }
  // Settle the rounding debt on the largest cells; every cell keeps >= 1.
  while (total != kFreqTotal) {
    size_t big = 0;
    for (size_t i = 1; i < L; ++i)
      if (counts[i] > counts[big]) big = i;
    if (total > kFreqTotal) {
      const uint32_t cut =
          std::min<uint32_t>(counts[big] - 1, static_cast<uint32_t>(total - kFreqTotal));
      counts[big] -= cut;
      total -= cut;
    } else {
      const uint32_t add = static_cast<uint32_t>(kFreqTotal - total);
      counts[big] += add;
      total += add;
    }
  }
  PmfTable t;
  t.cum.resize(L + 1);
  t.cum[0] = 0;
  for (size_t i = 0; i < L; ++i) t.cum[i + 1] = t.cum[i] + counts[i];
  return t;
}

double PmfTable::bits(size_t s) const {
  return -std::log2(static_cast<double>(freq(s)) / static_cast<double>(kFreqTotal));
}

size_t PmfTable::find(uint32_t target) const {
  size_t lo = 0, hi = symbols() - 1;
  while (lo < hi) {
    const size_t mid = (lo + hi + 1) / 2;
    if (cum[mid] <= target)
      lo = mid;
    else
      hi = mid - 1;
  }
  return lo;
}

void RangeEncoder::shift_out() {
  // A carry out of bit 32 bumps the already-emitted tail.
  if (low_ > 0xFFFFFFFFull) {
    size_t i = out_.size();
    while (i > 0 && out_[i - 1] == 0xFF) out_[--i] = 0;
    assert(i > 0);
    ++out_[i - 1];
    low_ &= 0xFFFFFFFFull;
  }
  while (range_ < kTopValue) {
    out_.push_back(static_cast<uint8_t>(low_ >> 24));
    low_ = (low_ << 8) & 0xFFFFFFFFull;
    range_ <<= 8;
  }
}

void RangeEncoder::encode(const PmfTable& model, size_t symbol) {
  any_ = true;
  // Full-precision interval split: quantizing range>>16 first would leak
  // ~5e-4 bits per symbol, which busts the overhead budget on long streams.
  const uint64_t lo = (static_cast<uint64_t>(range_) * model.cum[symbol]) >> kFreqBits;
  const uint64_t hi = (static_cast<uint64_t>(range_) * model.cum[symbol + 1]) >> kFreqBits;
  low_ += lo;
  range_ = static_cast<uint32_t>(hi - lo);
  shift_out();
}

std::vector<uint8_t> RangeEncoder::finish() {
  if (!any_) return {};
  // shift_out leaves low below 2^32, so no carry can surface here.
  for (int i = 0; i < 4; ++i) {
    out_.push_back(static_cast<uint8_t>(low_ >> 24));
    low_ = (low_ << 8) & 0xFFFFFFFFull;
  }
  return std::move(out_);
}

uint8_t RangeDecoder::next_byte() {
  if (pos_ >= data_.size()) throw StreamError("arithmetic stream exhausted");
  return data_[pos_++];
}

size_t RangeDecoder::decode(const PmfTable& model) {
  if (!primed_) {
    for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
    primed_ = true;
  }
  // Mirror of the encoder's full-precision split; the scaled cumulative is
  // strictly increasing, so the symbol is the largest one starting at or
  // below the code.
  const uint64_t range = range_;
  auto scaled = [&](size_t s) {
    return static_cast<uint32_t>((range * model.cum[s]) >> kFreqBits);
  };
  size_t lo = 0, hi = model.symbols() - 1;
  while (lo < hi) {
    const size_t mid = (lo + hi + 1) / 2;
    if (scaled(mid) <= code_)
      lo = mid;
    else
      hi = mid - 1;
  }
  code_ -= scaled(lo);
  range_ = scaled(lo + 1) - scaled(lo);
  while (range_ < kTopValue) {
    code_ = (code_ << 8) | next_byte();
    range_ <<= 8;
  }
  return lo;
}

std::vector<uint8_t> ac_encode(std::span<const uint8_t> symbols,
                               std::span<const PmfTable> models) {
  if (symbols.size() != models.size())
    throw std::invalid_argument("ac_encode: one model per symbol required");
  RangeEncoder enc;
  for (size_t i = 0; i < symbols.size(); ++i) {
    if (symbols[i] >= models[i].symbols())
      throw std::invalid_argument("ac_encode: symbol out of alphabet");
    enc.encode(models[i], symbols[i]);
  }
  return enc.finish();
}

std::vector<uint8_t> ac_decode(std::span<const uint8_t> bytes,
                               std::span<const PmfTable> models) {
  RangeDecoder dec(bytes);
  std::vector<uint8_t> symbols(models.size());
  for (size_t i = 0; i < models.size(); ++i)
    symbols[i] = static_cast<uint8_t>(dec.decode(models[i]));
  return symbols;
}

std::vector<PmfTable> build_pmf_tables(std::span<const double> pmfs, size_t count, size_t L) {
  if (pmfs.size() != count * L) throw std::invalid_argument("pmf matrix extents disagree");
  std::vector<PmfTable> tables;
  tables.reserve(count);
  for (size_t i = 0; i < count; ++i) tables.push_back(PmfTable::from_pmf(pmfs.subspan(i * L, L)));
  return tables;
}

std::vector<uint8_t> ac_encode(std::span<const uint8_t> symbols, std::span<const double> pmfs,
                               size_t L) {
  for (size_t i = 0; i < symbols.size(); ++i)
    if (!(pmfs[i * L + symbols[i]] > 0.0))
      throw std::invalid_argument("ac_encode: symbol with zero probability");
  const auto tables = build_pmf_tables(pmfs, symbols.size(), L);
  return ac_encode(symbols, tables);
}

std::vector<uint8_t> ac_decode(std::span<const uint8_t> bytes, std::span<const double> pmfs,
                               size_t count, size_t L) {
  const auto tables = build_pmf_tables(pmfs, count, L);
  return ac_decode(bytes, tables);
}

}  // namespace pcc
