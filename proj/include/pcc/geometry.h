#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pcc/tensor.h"

namespace pcc {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm2() const { return dot(*this); }
};

inline double sq_dist(const Vec3& a, const Vec3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

// Maps original coordinates into the unit cube: q = (p - center) * scale + 0.5.
// The default is the identity map.
struct NormTransform {
  Vec3 center{0.5, 0.5, 0.5};
  double scale = 1.0;

  Vec3 apply(const Vec3& p) const {
    return {(p.x - center.x) * scale + 0.5, (p.y - center.y) * scale + 0.5,
            (p.z - center.z) * scale + 0.5};
  }
  Vec3 invert(const Vec3& q) const {
    return {(q.x - 0.5) / scale + center.x, (q.y - 0.5) / scale + center.y,
            (q.z - 0.5) / scale + center.z};
  }
};

struct PointCloud {
  std::vector<Vec3> points;
  NormTransform transform;  // identity until normalize_cloud stamps it
};

// Centers the bounding box at (0.5,0.5,0.5) and scales by the largest extent
// so every coordinate lands in [0,1]. Zero-extent clouds keep scale 1.
PointCloud normalize_cloud(const PointCloud& cloud);

// Eq-style density compensation: cbrt(n / n0).
double density_factor(size_t n, size_t n0 = 1024);

// Greedy max-min subset. Starts at index 0, ties to the lowest index.
std::vector<int32_t> farthest_point_sample(std::span<const Vec3> pts, int64_t m);

// m draws without replacement, deterministic in the seed.
std::vector<int32_t> random_sample(size_t n, int64_t m, uint64_t seed);

// Exact nearest-neighbour structure. Equal distances resolve to the lowest
// point index so results match an index-ordered brute-force scan bit for bit.
class KdTree {
 public:
  explicit KdTree(std::span<const Vec3> pts);

  struct Hit {
    double d2;
    int32_t index;
    bool operator<(const Hit& o) const {
      return d2 < o.d2 || (d2 == o.d2 && index < o.index);
    }
  };

  // k smallest hits sorted ascending; exclude skips one index (self queries).
  void knn(const Vec3& q, int64_t k, std::vector<Hit>& out, int32_t exclude = -1) const;
  Hit nearest(const Vec3& q, int32_t exclude = -1) const;
  size_t size() const { return pts_.size(); }

 private:
  struct Node {
    double split;
    int32_t dim;        // -1 marks a leaf
    int32_t left, right;
    int32_t begin, end;  // leaf range in order_
  };
  int32_t build(int32_t begin, int32_t end);
  void search(int32_t node, const Vec3& q, int64_t k, int32_t exclude,
              std::vector<Hit>& heap) const;

  std::vector<Vec3> pts_;
  std::vector<int32_t> order_;
  std::vector<Node> nodes_;
  int32_t root_ = -1;
};

// m patches of K points each, kept as one flat (m*K, 3) block in centroid
// order. Points are centroid-relative and already carry the density scaling
// (or, in extended mode, the per-patch unit-ball normalization).
struct PatchSet {
  std::vector<Vec3> centroids;
  int64_t patch_size = 0;
  std::vector<Vec3> points;          // centroids.size() * patch_size entries
  double density = 1.0;              // cbrt(n/n0) multiplier already applied
  std::vector<double> patch_scales;  // extended mode only, one per patch
};

// K nearest cloud points around each centroid (ties to the lowest index),
// expressed relative to that centroid and multiplied by density.
PatchSet build_patches(std::span<const Vec3> cloud, const KdTree& tree,
                       std::span<const Vec3> centroids, int64_t K, double density);

// Rescales one centroid-relative patch into the unit ball; returns the scale.
// An all-zero patch keeps scale 1.
double patch_unit_normalize(std::span<Vec3> patch);

// Applies patch_unit_normalize in place of the density scaling (extended
// mode): divides each patch by its max norm and records the scales.
void apply_patch_unit_normalization(PatchSet& patches);

// Union of (relative + centroid) with the inverse normalization applied last.
// relative holds m*k decoder outputs with density/patch scaling already
// undone by the caller.
PointCloud reassemble_cloud(std::span<const Vec3> centroids, std::span<const Vec3> relative,
                            int64_t points_per_patch, const NormTransform& transform);

// (n,3) tensor view of a point list.
nn::Tensor points_to_tensor(std::span<const Vec3> pts);
std::vector<Vec3> tensor_to_points(const nn::Tensor& t);

}  // namespace pcc
