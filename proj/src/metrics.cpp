#include "pcc/metrics.h"

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace pcc {

namespace {

double mean_min_sq(std::span<const Vec3> from, const KdTree& to_tree) {
  double sum = 0.0;
  for (const Vec3& p : from) sum += to_tree.nearest(p).d2;
  return sum / static_cast<double>(from.size());
}

double psnr_from_mse(double mse, double peak) {
  if (mse <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

std::vector<Vec3> cloud_normals(std::span<const Vec3> pts, const KdTree& tree,
                                std::vector<bool>& degenerate) {
  const int64_t want = std::min<int64_t>(8, static_cast<int64_t>(pts.size()) - 1);
  std::vector<Vec3> normals(pts.size());
  degenerate.assign(pts.size(), false);
  std::vector<KdTree::Hit> hits;
  std::vector<Vec3> neigh;
  for (size_t i = 0; i < pts.size(); ++i) {
    tree.knn(pts[i], want, hits, static_cast<int32_t>(i));
    neigh.clear();
    for (const auto& h : hits) neigh.push_back(pts[h.index]);
    const NormalEstimate est = estimate_normal(neigh);
    normals[i] = est.normal;
    degenerate[i] = est.degenerate;
  }
  return normals;
}

// Directional point-to-plane MSE: every point of `from` is matched to its
// nearest in `to` and the displacement is projected onto `to`'s normal there.
double mean_plane_sq(std::span<const Vec3> from, std::span<const Vec3> to, const KdTree& to_tree,
                     const std::vector<Vec3>& to_normals, const std::vector<bool>& to_degenerate) {
  double sum = 0.0;
  for (const Vec3& p : from) {
    const auto hit = to_tree.nearest(p);
    const Vec3 v = p - to[static_cast<size_t>(hit.index)];
    if (to_degenerate[static_cast<size_t>(hit.index)]) {
      sum += v.norm2();
    } else {
      const double proj = v.dot(to_normals[static_cast<size_t>(hit.index)]);
      sum += proj * proj;
    }
  }
  return sum / static_cast<double>(from.size());
}

}  // namespace

NormalEstimate estimate_normal(std::span<const Vec3> neighbors) {
  if (neighbors.size() < 3) return {{0, 0, 0}, true};
  Vec3 mean{0, 0, 0};
  for (const Vec3& p : neighbors) mean = mean + p;
  mean = mean * (1.0 / static_cast<double>(neighbors.size()));
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const Vec3& p : neighbors) {
    const Vec3 d = p - mean;
    const Eigen::Vector3d v(d.x, d.y, d.z);
    cov += v * v.transpose();
  }
  cov /= static_cast<double>(neighbors.size());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  const Eigen::Vector3d evals = eig.eigenvalues();  // ascending
  // Rank < 2: the mid eigenvalue vanishes, the neighbourhood is a point or a
  // line and no plane normal exists.
  if (evals[1] <= 1e-12 * std::max(evals[2], 0.0)) return {{0, 0, 0}, true};
  const Eigen::Vector3d n = eig.eigenvectors().col(0);
  return {{n.x(), n.y(), n.z()}, false};
}

double chamfer(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("chamfer: empty cloud");
  const KdTree ta(a), tb(b);
  return mean_min_sq(a, tb) + mean_min_sq(b, ta);
}

double psnr_d1(std::span<const Vec3> a, std::span<const Vec3> b, double peak) {
  if (a.empty() || b.empty()) throw std::invalid_argument("psnr_d1: empty cloud");
  if (!(peak > 0)) throw std::invalid_argument("psnr_d1: peak must be positive");
  const KdTree ta(a), tb(b);
  const double mse = std::max(mean_min_sq(a, tb), mean_min_sq(b, ta));
  return psnr_from_mse(mse, peak);
}

double psnr_d2(std::span<const Vec3> a, std::span<const Vec3> b, double peak) {
  if (a.empty() || b.empty()) throw std::invalid_argument("psnr_d2: empty cloud");
  if (!(peak > 0)) throw std::invalid_argument("psnr_d2: peak must be positive");
  const KdTree ta(a), tb(b);
  std::vector<bool> dega, degb;
  const std::vector<Vec3> na = cloud_normals(a, ta, dega);
  const std::vector<Vec3> nb = cloud_normals(b, tb, degb);
  const double mse =
      std::max(mean_plane_sq(a, b, tb, nb, degb), mean_plane_sq(b, a, ta, na, dega));
  return psnr_from_mse(mse, peak);
}

double sdv(std::span<const Vec3> pts) {
  if (pts.size() < 2) throw std::invalid_argument("sdv: need at least two points");
  const KdTree tree(pts);
  std::vector<double> d2(pts.size());
  double mean = 0.0;
  for (size_t i = 0; i < pts.size(); ++i) {
    d2[i] = tree.nearest(pts[i], static_cast<int32_t>(i)).d2;
    mean += d2[i];
  }
  mean /= static_cast<double>(pts.size());
  double var = 0.0;
  for (double v : d2) var += (v - mean) * (v - mean);
  return var / static_cast<double>(pts.size());
}

double uniformity_coefficient(std::span<const Vec3> recon, std::span<const Vec3> source) {
  return sdv(recon) / sdv(source);
}

MetricsReport evaluate(std::span<const Vec3> source, std::span<const Vec3> recon, double peak) {
  MetricsReport r;
  r.chamfer = chamfer(source, recon);
  r.d1_psnr = psnr_d1(source, recon, peak);
  r.d2_psnr = psnr_d2(source, recon, peak);
  r.sdv_source = sdv(source);
  r.sdv_recon = sdv(recon);
  r.uc = r.sdv_recon / r.sdv_source;
  return r;
}

std::string MetricsReport::to_line() const {
  char buf[384];
  int len = std::snprintf(buf, sizeof buf,
                          "chamfer=%.12g d1_psnr=%.12g d2_psnr=%.12g sdv_source=%.12g "
                          "sdv_recon=%.12g uc=%.12g",
                          chamfer, d1_psnr, d2_psnr, sdv_source, sdv_recon, uc);
  if (bpp >= 0) len += std::snprintf(buf + len, sizeof buf - len, " bpp=%.12g", bpp);
  return std::string(buf, static_cast<size_t>(len));
}

}  // namespace pcc
