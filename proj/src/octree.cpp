#include "pcc/octree.h"

#include <bit>
#include <stdexcept>

#include "pcc/common.h"

namespace pcc {

namespace {

struct Cell {
  Vec3 lo;
  double size;
  std::vector<int32_t> pts;  // encode side only
};

int child_bit(const Vec3& p, const Vec3& lo, double half) {
  const int xh = p.x >= lo.x + half ? 1 : 0;
  const int yh = p.y >= lo.y + half ? 1 : 0;
  const int zh = p.z >= lo.z + half ? 1 : 0;
  return (xh << 2) | (yh << 1) | zh;
}

Vec3 child_lo(const Vec3& lo, double half, int b) {
  return {lo.x + ((b >> 2) & 1) * half, lo.y + ((b >> 1) & 1) * half, lo.z + (b & 1) * half};
}

}  // namespace

size_t OctreeStream::leaf_count() const {
  size_t level_nodes = 1;
  size_t pos = 0;
  size_t leaves = 0;
  for (int level = 0; level < depth; ++level) {
    if (bytes.size() - pos < level_nodes) throw StreamError("octree: truncated byte list");
    size_t next = 0;
    for (size_t i = 0; i < level_nodes; ++i) {
      const uint8_t b = bytes[pos + i];
      if (b == 0) throw StreamError("octree: zero occupancy byte");
      next += static_cast<size_t>(std::popcount(b));
    }
    pos += level_nodes;
    level_nodes = next;
    if (level + 1 == depth) leaves = next;
  }
  if (pos != bytes.size()) throw StreamError("octree: trailing bytes");
  return leaves;
}

OctreeStream octree_encode(std::span<const Vec3> pts, int depth) {
  if (pts.empty()) throw std::invalid_argument("octree_encode: empty input");
  if (depth < 1 || depth > 16) throw std::invalid_argument("octree_encode: depth out of range");
  for (const Vec3& p : pts)
    if (p.x < 0 || p.x > 1 || p.y < 0 || p.y > 1 || p.z < 0 || p.z > 1)
      throw std::invalid_argument("octree_encode: coordinate outside [0,1]");

  OctreeStream stream;
  stream.depth = static_cast<uint8_t>(depth);
  std::vector<Cell> level(1);
  level[0].lo = {0, 0, 0};
  level[0].size = 1.0;
  level[0].pts.resize(pts.size());
  for (size_t i = 0; i < pts.size(); ++i) level[0].pts[i] = static_cast<int32_t>(i);

  for (int d = 0; d < depth; ++d) {
    std::vector<Cell> next;
    for (const Cell& cell : level) {
      const double half = cell.size * 0.5;
      std::vector<int32_t> buckets[8];
      for (int32_t pi : cell.pts) buckets[child_bit(pts[pi], cell.lo, half)].push_back(pi);
      uint8_t occ = 0;
      for (int b = 0; b < 8; ++b)
        if (!buckets[b].empty()) occ |= static_cast<uint8_t>(1u << b);
      stream.bytes.push_back(occ);
      if (d + 1 < depth) {
        for (int b = 0; b < 8; ++b) {
          if (buckets[b].empty()) continue;
          Cell c;
          c.lo = child_lo(cell.lo, half, b);
          c.size = half;
          c.pts = std::move(buckets[b]);
          next.push_back(std::move(c));
        }
      }
    }
    level = std::move(next);
  }
  return stream;
}

std::vector<Vec3> octree_decode(const OctreeStream& stream) {
  if (stream.depth < 1 || stream.depth > 16) throw StreamError("octree: bad depth");
  struct Box {
    Vec3 lo;
    double size;
  };
  std::vector<Box> level{{{0, 0, 0}, 1.0}};
  size_t pos = 0;
  std::vector<Vec3> out;
  for (int d = 0; d < stream.depth; ++d) {
    std::vector<Box> next;
    for (const Box& box : level) {
      if (pos >= stream.bytes.size()) throw StreamError("octree: truncated byte list");
      const uint8_t occ = stream.bytes[pos++];
      if (occ == 0) throw StreamError("octree: zero occupancy byte");
      const double half = box.size * 0.5;
      for (int b = 0; b < 8; ++b) {
        if (!(occ & (1u << b))) continue;
        const Vec3 lo = child_lo(box.lo, half, b);
        if (d + 1 == stream.depth) {
          const double q = half * 0.5;
          out.push_back({lo.x + q, lo.y + q, lo.z + q});
        } else {
          next.push_back({lo, half});
        }
      }
    }
    level = std::move(next);
  }
  if (pos != stream.bytes.size()) throw StreamError("octree: trailing bytes");
  return out;
}

int select_depth(size_t n, std::span<const Vec3> centroids, double budget_bpp) {
  if (budget_bpp <= 0) throw std::invalid_argument("select_depth: budget must be positive");
  const double budget_bits = budget_bpp * static_cast<double>(n);
  int chosen = 1;
  for (int d = 1; d <= 16; ++d) {
    const OctreeStream s = octree_encode(centroids, d);
    if (8.0 * static_cast<double>(s.byte_count()) <= budget_bits)
      chosen = d;
    else
      break;  // byte count is monotone in depth
  }
  return chosen;
}

void append_octree(std::vector<uint8_t>& out, const OctreeStream& stream) {
  put_u8(out, stream.depth);
  put_u32(out, static_cast<uint32_t>(stream.bytes.size()));
  out.insert(out.end(), stream.bytes.begin(), stream.bytes.end());
}

OctreeStream read_octree(ByteReader& r) {
  OctreeStream s;
  s.depth = r.u8();
  if (s.depth < 1 || s.depth > 16) throw StreamError("octree: bad depth");
  const uint32_t len = r.u32();
  const uint8_t* data = r.bytes(len);
  s.bytes.assign(data, data + len);
  return s;
}

}  // namespace pcc
