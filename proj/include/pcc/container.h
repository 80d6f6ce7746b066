#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pcc/geometry.h"
#include "pcc/octree.h"

namespace pcc {

// Compressed-cloud container, version 1, all little-endian:
//   magic "IPDA", version u8, flags u8 (bit0 = extended mode),
//   n u32, K u16, k u16, d u8, L u8,
//   scale f64, offset f64 x3 (de-normalization transform),
//   octree: depth u8 + len u32 + bytes,
//   [extended only: leaf_count x f32 patch scales],
//   latent: len u32 + bytes.
constexpr uint8_t kContainerVersion = 1;
constexpr uint8_t kFlagExtended = 0x01;

struct CompressedCloud {
  uint8_t flags = 0;
  uint32_t n = 0;
  uint16_t K = 0;
  uint16_t k = 0;
  uint8_t d = 0;
  uint8_t L = 0;
  NormTransform transform;
  OctreeStream octree;
  std::vector<float> patch_scales;  // extended mode, octree leaf order
  std::vector<uint8_t> latent;

  bool extended() const { return flags & kFlagExtended; }
};

std::vector<uint8_t> pack(const CompressedCloud& c);
// Throws StreamError on anything structurally wrong, including trailing bytes.
CompressedCloud unpack(std::span<const uint8_t> bytes);

}  // namespace pcc
