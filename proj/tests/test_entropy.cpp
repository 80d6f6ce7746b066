#include <cmath>
#include <random>

#include "doctest.h"
#include "pcc/common.h"
#include "pcc/container.h"
#include "pcc/range_coder.h"
#include "test_support.h"

using namespace pcc;

namespace {

// Dirichlet-ish pmf rows with occasional hard concentration.
std::vector<double> random_pmfs(size_t count, size_t L, std::mt19937_64& rng) {
  std::vector<double> pmfs(count * L);
  for (size_t i = 0; i < count; ++i) {
    double sum = 0;
    const bool spiky = (rng() & 3) == 0;
    for (size_t s = 0; s < L; ++s) {
      double w = unit_double(rng) + 1e-6;
      if (spiky) w = std::pow(w, 8.0);
      pmfs[i * L + s] = w;
      sum += w;
    }
    for (size_t s = 0; s < L; ++s) pmfs[i * L + s] /= sum;
  }
  return pmfs;
}

std::vector<uint8_t> sample_symbols(const std::vector<double>& pmfs, size_t L,
                                    std::mt19937_64& rng) {
  const size_t count = pmfs.size() / L;
  std::vector<uint8_t> sym(count);
  for (size_t i = 0; i < count; ++i) {
    double u = unit_double(rng);
    size_t s = 0;
    while (s + 1 < L && u >= pmfs[i * L + s]) u -= pmfs[i * L + s], ++s;
    sym[i] = static_cast<uint8_t>(s);
  }
  return sym;
}

}  // namespace

TEST_CASE("empty stream encodes to nothing") {
  CHECK(ac_encode({}, std::span<const double>{}, 7).empty());
  CHECK(ac_decode({}, std::span<const double>{}, 0, 7).empty());
}

TEST_CASE("eight coin flips fit in five bytes") {
  std::vector<double> pmfs(8 * 2, 0.5);
  std::vector<uint8_t> sym = {1, 0, 0, 1, 1, 1, 0, 1};
  const auto bytes = ac_encode(sym, pmfs, 2);
  CHECK(bytes.size() <= 5);
  CHECK(ac_decode(bytes, pmfs, 8, 2) == sym);
}

TEST_CASE("roundtrip holds over random streams") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 400; ++trial) {
    const size_t L = 2 + rng() % 15;
    const size_t count = rng() % 300;
    const auto pmfs = random_pmfs(count, L, rng);
    const auto sym = sample_symbols(pmfs, L, rng);
    const auto bytes = ac_encode(sym, pmfs, L);
    CHECK(ac_decode(bytes, pmfs, count, L) == sym);
    const auto again = ac_encode(sym, pmfs, L);
    CHECK(bytes == again);
  }
}

TEST_CASE("coded size sits within the information-content window") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const size_t L = 7;
    const size_t count = 1 + rng() % 2000;
    const auto pmfs = random_pmfs(count, L, rng);
    const auto sym = sample_symbols(pmfs, L, rng);
    const auto bytes = ac_encode(sym, pmfs, L);
    double info = 0;
    for (size_t i = 0; i < count; ++i) info -= std::log2(pmfs[i * L + sym[i]]);
    const double overhead = 8.0 * static_cast<double>(bytes.size()) - info;
    CHECK(overhead >= 0.0);
    CHECK(overhead <= 64.0);
  }
}

TEST_CASE("overhead bound holds on a million-symbol stream") {
  std::mt19937_64 rng(41);
  const size_t L = 7, count = 1000000;
  const auto pmfs = random_pmfs(count, L, rng);
  const auto sym = sample_symbols(pmfs, L, rng);
  const auto bytes = ac_encode(sym, pmfs, L);
  double info = 0;
  for (size_t i = 0; i < count; ++i) info -= std::log2(pmfs[i * L + sym[i]]);
  const double overhead = 8.0 * static_cast<double>(bytes.size()) - info;
  CHECK(overhead >= 0.0);
  CHECK(overhead <= 64.0);
  CHECK(ac_decode(bytes, pmfs, count, L) == sym);
}

TEST_CASE("zero-probability symbols are rejected") {
  std::vector<double> pmfs = {0.5, 0.5, 0.0};
  std::vector<uint8_t> sym = {2};
  CHECK_THROWS_AS(ac_encode(sym, pmfs, 3), std::invalid_argument);
}

TEST_CASE("a truncated stream raises a stream error") {
  std::mt19937_64 rng(3);
  const auto pmfs = random_pmfs(64, 7, rng);
  const auto sym = sample_symbols(pmfs, 7, rng);
  auto bytes = ac_encode(sym, pmfs, 7);
  bytes.resize(bytes.size() / 2);
  CHECK_THROWS_AS(ac_decode(bytes, pmfs, 64, 7), StreamError);
}

TEST_CASE("decoding under a perturbed model diverges") {
  std::mt19937_64 rng(17);
  const auto pmfs = random_pmfs(256, 7, rng);
  const auto sym = sample_symbols(pmfs, 7, rng);
  const auto bytes = ac_encode(sym, pmfs, 7);
  auto wrong = pmfs;
  for (size_t i = 0; i < wrong.size(); i += 7) {
    std::swap(wrong[i], wrong[i + 6]);
    std::swap(wrong[i + 1], wrong[i + 5]);
  }
  bool diverged = false;
  try {
    diverged = ac_decode(bytes, wrong, 256, 7) != sym;
  } catch (const StreamError&) {
    diverged = true;
  }
  CHECK(diverged);
}

TEST_CASE("pmf quantization keeps every cell positive and sums to the total") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const size_t L = 2 + rng() % 12;
    auto pmfs = random_pmfs(1, L, rng);
    if (trial % 3 == 0) {
      // Stress: nearly all mass on one symbol.
      for (size_t s = 0; s < L; ++s) pmfs[s] = s == 0 ? 1.0 - 1e-9 : 1e-9 / (L - 1);
    }
    const PmfTable t = PmfTable::from_pmf(pmfs);
    CHECK(t.cum.front() == 0);
    CHECK(t.cum.back() == kFreqTotal);
    for (size_t s = 0; s < L; ++s) CHECK(t.freq(s) >= 1);
    for (size_t s = 0; s < L; ++s) CHECK(t.find(t.cum[s]) == s);
  }
}

TEST_CASE("container pack/unpack round-trips") {
  std::mt19937_64 rng(12);
  CompressedCloud c;
  c.flags = kFlagExtended;
  c.n = 2048;
  c.K = 256;
  c.k = 128;
  c.d = 16;
  c.L = 7;
  c.transform.scale = 0.0123;
  c.transform.center = {1.5, -2.25, 300.0};
  c.octree = octree_encode(testsup::random_cloud(16, 5), 4);
  c.patch_scales.resize(c.octree.leaf_count());
  for (auto& s : c.patch_scales) s = static_cast<float>(unit_double(rng));
  c.latent.resize(97);
  for (auto& b : c.latent) b = static_cast<uint8_t>(rng());

  const auto bytes = pack(c);
  const CompressedCloud back = unpack(bytes);
  CHECK(back.flags == c.flags);
  CHECK(back.n == c.n);
  CHECK(back.K == c.K);
  CHECK(back.k == c.k);
  CHECK(back.d == c.d);
  CHECK(back.L == c.L);
  CHECK(back.transform.scale == c.transform.scale);
  CHECK(back.transform.center.x == c.transform.center.x);
  CHECK(back.octree.depth == c.octree.depth);
  CHECK(back.octree.bytes == c.octree.bytes);
  CHECK(back.patch_scales == c.patch_scales);
  CHECK(back.latent == c.latent);
  CHECK(pack(back) == bytes);
}

TEST_CASE("container rejects structural corruption") {
  CompressedCloud c;
  c.n = 100;
  c.K = 16;
  c.k = 8;
  c.d = 4;
  c.L = 7;
  c.transform.scale = 1.0;
  c.octree = octree_encode(testsup::random_cloud(8, 3), 3);
  c.latent = {1, 2, 3};
  auto bytes = pack(c);

  auto flip = bytes;
  flip[0] = 'X';
  CHECK_THROWS_AS(unpack(flip), StreamError);  // magic
  flip = bytes;
  flip[4] = 9;
  CHECK_THROWS_AS(unpack(flip), StreamError);  // version
  flip = bytes;
  flip.pop_back();
  CHECK_THROWS_AS(unpack(flip), StreamError);  // truncated
  flip = bytes;
  flip.push_back(0);
  CHECK_THROWS_AS(unpack(flip), StreamError);  // trailing
}
