#pragma once

#include <span>
#include <string>
#include <vector>

#include "pcc/geometry.h"

namespace pcc {

// Symmetric Chamfer distance on squared distances: mean-of-min in both
// directions, summed.
double chamfer(std::span<const Vec3> a, std::span<const Vec3> b);

// Point-to-point PSNR. Per direction the MSE is the mean min squared
// distance; the symmetric MSE takes the worse direction. Identical clouds
// report +infinity.
double psnr_d1(std::span<const Vec3> a, std::span<const Vec3> b, double peak);

// Point-to-plane PSNR. Each nearest-neighbour displacement is projected onto
// the matched cloud's local normal (covariance of the 8 nearest neighbours,
// smallest eigenvector). Neighbourhoods of rank < 2 fall back to the
// point-to-point error for that point.
double psnr_d2(std::span<const Vec3> a, std::span<const Vec3> b, double peak);

// Population variance of the per-point nearest-neighbour squared distances.
// Needs at least two points.
double sdv(std::span<const Vec3> pts);

// SDV(recon) / SDV(source); IEEE inf/nan when the source variance is zero.
double uniformity_coefficient(std::span<const Vec3> recon, std::span<const Vec3> source);

// Unit normal of a neighbourhood, or nullopt-like flag when rank < 2.
// Exposed so the point-to-plane path is testable in isolation.
struct NormalEstimate {
  Vec3 normal;
  bool degenerate;
};
NormalEstimate estimate_normal(std::span<const Vec3> neighbors);

struct MetricsReport {
  double chamfer = 0;
  double d1_psnr = 0;
  double d2_psnr = 0;
  double sdv_source = 0;
  double sdv_recon = 0;
  double uc = 0;
  double bpp = -1;  // < 0 when no container was given

  // Frozen machine-readable line, one record per evaluation.
  std::string to_line() const;
};

MetricsReport evaluate(std::span<const Vec3> source, std::span<const Vec3> recon, double peak);

}  // namespace pcc
