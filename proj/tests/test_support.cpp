#include "test_support.h"

#include <Eigen/Dense>

namespace testsup {

double brute_plane_mse(const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
  const size_t want = std::min<size_t>(8, to.size() - 1);
  std::vector<Vec3> normals(to.size());
  std::vector<bool> degen(to.size(), false);
  for (size_t i = 0; i < to.size(); ++i) {
    const auto nn = testsup::brute_knn(to[i], to, want, static_cast<int>(i));
    if (nn.size() < 3) {
      degen[i] = true;
      continue;
    }
    Vec3 mean{0, 0, 0};
    for (int j : nn) mean = mean + to[static_cast<size_t>(j)];
    mean = mean * (1.0 / static_cast<double>(nn.size()));
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (int j : nn) {
      const Vec3 d = to[static_cast<size_t>(j)] - mean;
      const Eigen::Vector3d v(d.x, d.y, d.z);
      cov += v * v.transpose();
    }
    cov /= static_cast<double>(nn.size());
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    if (eig.eigenvalues()[1] <= 1e-12 * std::max(eig.eigenvalues()[2], 0.0)) {
      degen[i] = true;
      continue;
    }
    const Eigen::Vector3d n = eig.eigenvectors().col(0);
    normals[i] = {n.x(), n.y(), n.z()};
  }
  double sum = 0;
  for (const Vec3& p : from) {
    const int j = brute_nn_index(p, to);
    const Vec3 v = p - to[static_cast<size_t>(j)];
    if (degen[static_cast<size_t>(j)]) {
      sum += v.norm2();
    } else {
      const double proj = v.dot(normals[static_cast<size_t>(j)]);
      sum += proj * proj;
    }
  }
  return sum / static_cast<double>(from.size());
}

}  // namespace testsup
