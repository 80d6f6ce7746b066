#include "pcc/geometry.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "pcc/common.h"

namespace pcc {

PointCloud normalize_cloud(const PointCloud& cloud) {
  if (cloud.points.empty()) throw std::invalid_argument("normalize_cloud: empty cloud");
  Vec3 lo = cloud.points[0], hi = cloud.points[0];
  for (const Vec3& p : cloud.points) {
    lo.x = std::min(lo.x, p.x);
    lo.y = std::min(lo.y, p.y);
    lo.z = std::min(lo.z, p.z);
    hi.x = std::max(hi.x, p.x);
    hi.y = std::max(hi.y, p.y);
    hi.z = std::max(hi.z, p.z);
  }
  const double extent = std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z});
  NormTransform t;
  t.center = (lo + hi) * 0.5;
  t.scale = extent > 0.0 ? 1.0 / extent : 1.0;
  PointCloud out;
  out.transform = t;
  out.points.reserve(cloud.points.size());
  for (const Vec3& p : cloud.points) {
    Vec3 q = t.apply(p);
    // Rounding can land an extreme coordinate one ulp outside the cube.
    q.x = std::clamp(q.x, 0.0, 1.0);
    q.y = std::clamp(q.y, 0.0, 1.0);
    q.z = std::clamp(q.z, 0.0, 1.0);
    out.points.push_back(q);
  }
  return out;
}

double density_factor(size_t n, size_t n0) {
  return std::cbrt(static_cast<double>(n) / static_cast<double>(n0));
}

std::vector<int32_t> farthest_point_sample(std::span<const Vec3> pts, int64_t m) {
  const int64_t n = static_cast<int64_t>(pts.size());
  if (m < 1 || m > n) throw std::invalid_argument("farthest_point_sample: m out of range");
  std::vector<int32_t> picks;
  picks.reserve(static_cast<size_t>(m));
  picks.push_back(0);
  std::vector<double> best(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) best[i] = sq_dist(pts[i], pts[0]);
  while (static_cast<int64_t>(picks.size()) < m) {
    int64_t far = 0;
    for (int64_t i = 1; i < n; ++i)
      if (best[i] > best[far]) far = i;
    picks.push_back(static_cast<int32_t>(far));
    for (int64_t i = 0; i < n; ++i) best[i] = std::min(best[i], sq_dist(pts[i], pts[far]));
  }
  return picks;
}

std::vector<int32_t> random_sample(size_t n, int64_t m, uint64_t seed) {
  if (m < 1 || m > static_cast<int64_t>(n))
    throw std::invalid_argument("random_sample: m out of range");
  std::vector<int32_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = static_cast<int32_t>(i);
  std::mt19937_64 rng(seed);
  for (int64_t i = 0; i < m; ++i) {
    const uint64_t j = i + next_below(rng, n - static_cast<uint64_t>(i));
    std::swap(idx[static_cast<size_t>(i)], idx[j]);
  }
  idx.resize(static_cast<size_t>(m));
  return idx;
}

// --- KdTree ------------------------------------------------------------------

namespace {
constexpr int32_t kLeafSize = 8;
}

KdTree::KdTree(std::span<const Vec3> pts) : pts_(pts.begin(), pts.end()) {
  order_.resize(pts_.size());
  for (size_t i = 0; i < pts_.size(); ++i) order_[i] = static_cast<int32_t>(i);
  if (!pts_.empty()) root_ = build(0, static_cast<int32_t>(pts_.size()));
}

int32_t KdTree::build(int32_t begin, int32_t end) {
  Node node;
  node.begin = begin;
  node.end = end;
  if (end - begin <= kLeafSize) {
    node.dim = -1;
    node.split = 0;
    node.left = node.right = -1;
    nodes_.push_back(node);
    return static_cast<int32_t>(nodes_.size() - 1);
  }
  Vec3 lo = pts_[order_[begin]], hi = lo;
  for (int32_t i = begin + 1; i < end; ++i) {
    const Vec3& p = pts_[order_[i]];
    lo.x = std::min(lo.x, p.x);
    lo.y = std::min(lo.y, p.y);
    lo.z = std::min(lo.z, p.z);
    hi.x = std::max(hi.x, p.x);
    hi.y = std::max(hi.y, p.y);
    hi.z = std::max(hi.z, p.z);
  }
  const double ex = hi.x - lo.x, ey = hi.y - lo.y, ez = hi.z - lo.z;
  node.dim = ex >= ey && ex >= ez ? 0 : (ey >= ez ? 1 : 2);
  const int32_t mid = begin + (end - begin) / 2;
  auto coord = [&](int32_t idx) {
    const Vec3& p = pts_[idx];
    return node.dim == 0 ? p.x : (node.dim == 1 ? p.y : p.z);
  };
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int32_t a, int32_t b) {
                     const double ca = coord(a), cb = coord(b);
                     return ca < cb || (ca == cb && a < b);
                   });
  node.split = coord(order_[mid]);
  const int32_t self = static_cast<int32_t>(nodes_.size());
  nodes_.push_back(node);
  const int32_t left = build(begin, mid);
  const int32_t right = build(mid, end);
  nodes_[self].left = left;
  nodes_[self].right = right;
  return self;
}

void KdTree::search(int32_t ni, const Vec3& q, int64_t k, int32_t exclude,
                    std::vector<Hit>& heap) const {
  const Node& node = nodes_[ni];
  if (node.dim < 0) {
    for (int32_t i = node.begin; i < node.end; ++i) {
      const int32_t idx = order_[i];
      if (idx == exclude) continue;
      Hit h{sq_dist(q, pts_[idx]), idx};
      if (static_cast<int64_t>(heap.size()) < k) {
        heap.push_back(h);
        std::push_heap(heap.begin(), heap.end());
      } else if (h < heap.front()) {
        std::pop_heap(heap.begin(), heap.end());
        heap.back() = h;
        std::push_heap(heap.begin(), heap.end());
      }
    }
    return;
  }
  const double qc = node.dim == 0 ? q.x : (node.dim == 1 ? q.y : q.z);
  const double diff = qc - node.split;
  const int32_t near = diff < 0 ? node.left : node.right;
  const int32_t far = diff < 0 ? node.right : node.left;
  search(near, q, k, exclude, heap);
  // The far half can only matter if the splitting plane is not strictly
  // farther than the current kth hit; equality must still be explored so that
  // index ties resolve exactly as brute force would.
  if (static_cast<int64_t>(heap.size()) < k || diff * diff <= heap.front().d2)
    search(far, q, k, exclude, heap);
}

void KdTree::knn(const Vec3& q, int64_t k, std::vector<Hit>& out, int32_t exclude) const {
  out.clear();
  if (root_ < 0 || k <= 0) return;
  search(root_, q, k, exclude, out);
  std::sort_heap(out.begin(), out.end());
}

KdTree::Hit KdTree::nearest(const Vec3& q, int32_t exclude) const {
  std::vector<Hit> out;
  knn(q, 1, out, exclude);
  if (out.empty()) return {std::numeric_limits<double>::infinity(), -1};
  return out[0];
}

// --- patches -----------------------------------------------------------------

PatchSet build_patches(std::span<const Vec3> cloud, const KdTree& tree,
                       std::span<const Vec3> centroids, int64_t K, double density) {
  if (centroids.empty()) throw std::invalid_argument("build_patches: no centroids");
  if (K < 1 || K > static_cast<int64_t>(cloud.size()))
    throw std::invalid_argument("build_patches: K out of range");
  PatchSet out;
  out.patch_size = K;
  out.density = density;
  out.centroids.assign(centroids.begin(), centroids.end());
  out.points.resize(centroids.size() * static_cast<size_t>(K));
  std::vector<KdTree::Hit> hits;
  for (size_t i = 0; i < centroids.size(); ++i) {
    tree.knn(centroids[i], K, hits);
    for (int64_t j = 0; j < K; ++j)
      out.points[i * K + j] = (cloud[hits[j].index] - centroids[i]) * density;
  }
  return out;
}

double patch_unit_normalize(std::span<Vec3> patch) {
  double max2 = 0.0;
  for (const Vec3& p : patch) max2 = std::max(max2, p.norm2());
  if (max2 <= 0.0) return 1.0;
  const double scale = std::sqrt(max2);
  const double inv = 1.0 / scale;
  for (Vec3& p : patch) p = p * inv;
  return scale;
}

void apply_patch_unit_normalization(PatchSet& patches) {
  const size_t m = patches.centroids.size();
  patches.patch_scales.resize(m);
  for (size_t i = 0; i < m; ++i) {
    std::span<Vec3> patch(patches.points.data() + i * patches.patch_size,
                          static_cast<size_t>(patches.patch_size));
    patches.patch_scales[i] = patch_unit_normalize(patch);
  }
}

PointCloud reassemble_cloud(std::span<const Vec3> centroids, std::span<const Vec3> relative,
                            int64_t points_per_patch, const NormTransform& transform) {
  if (relative.size() != centroids.size() * static_cast<size_t>(points_per_patch))
    throw std::invalid_argument("reassemble_cloud: extents disagree");
  PointCloud out;
  out.points.reserve(relative.size());
  for (size_t i = 0; i < centroids.size(); ++i)
    for (int64_t j = 0; j < points_per_patch; ++j)
      out.points.push_back(transform.invert(relative[i * points_per_patch + j] + centroids[i]));
  return out;
}

nn::Tensor points_to_tensor(std::span<const Vec3> pts) {
  nn::Tensor t(static_cast<int64_t>(pts.size()), 3);
  for (size_t i = 0; i < pts.size(); ++i) {
    t.val[3 * i] = pts[i].x;
    t.val[3 * i + 1] = pts[i].y;
    t.val[3 * i + 2] = pts[i].z;
  }
  return t;
}

std::vector<Vec3> tensor_to_points(const nn::Tensor& t) {
  if (t.cols != 3) throw std::invalid_argument("tensor_to_points: expected 3 columns");
  std::vector<Vec3> pts(static_cast<size_t>(t.rows));
  for (int64_t i = 0; i < t.rows; ++i) pts[i] = {t.val[3 * i], t.val[3 * i + 1], t.val[3 * i + 2]};
  return pts;
}

}  // namespace pcc
