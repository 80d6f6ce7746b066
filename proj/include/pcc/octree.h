#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pcc/common.h"
#include "pcc/geometry.h"

namespace pcc {

// Breadth-first occupancy-byte octree over the unit cube. Child bit
// b = (x_hi<<2)|(y_hi<<1)|z_hi where *_hi tests the upper half of the cell;
// a coordinate equal to the midpoint goes to the upper child. One byte per
// occupied node at depths 0..depth-1; leaves live at level `depth`.
struct OctreeStream {
  uint8_t depth = 1;
  std::vector<uint8_t> bytes;

  size_t byte_count() const { return bytes.size(); }
  // Walks the level structure; throws StreamError if the byte list is
  // truncated, oversized, or contains a zero byte.
  size_t leaf_count() const;
};

// All coordinates must lie in [0,1]. Duplicate leaves merge.
OctreeStream octree_encode(std::span<const Vec3> pts, int depth);

// One point per occupied leaf, at the leaf voxel center, in breadth-first
// order. That order defines the downstream patch order.
std::vector<Vec3> octree_decode(const OctreeStream& stream);

// Largest depth in [1,16] whose stream fits 8*bytes <= budget_bpp*n; returns 1
// when even the root level overruns the budget.
int select_depth(size_t n, std::span<const Vec3> centroids, double budget_bpp);

// Embedded layout: depth u8, byte count u32 LE, occupancy bytes.
void append_octree(std::vector<uint8_t>& out, const OctreeStream& stream);
OctreeStream read_octree(ByteReader& r);

}  // namespace pcc
