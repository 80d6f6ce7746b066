#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pcc/container.h"
#include "pcc/model.h"

namespace pcc {

// Reference count for the density compensation; fixed by the v1 container.
constexpr size_t kReferenceCount = 1024;

struct CodecParams {
  int K = 0;
  int alpha = 2;
  double roc = 0.25;       // octree bit budget in bits per input point
  bool extended = false;   // random sampling + per-patch unit-ball scaling
  uint64_t seed = 1;       // extended-mode sampling seed
};

struct CompressInfo {
  size_t m = 0;          // sampled centroids
  size_t m_decoded = 0;  // after octree merge
  int depth = 0;
  size_t total_bytes = 0;
  size_t octree_payload_bytes = 0;
  size_t latent_payload_bytes = 0;
  double bpp = 0;
  double est_rate_bpp = 0;  // Eq-style estimate at the coded pmfs
  std::vector<uint8_t> codes;
};

struct DecompressInfo {
  size_t m_decoded = 0;
  int depth = 0;
  std::vector<uint8_t> codes;
};

// Full pipeline: normalize, sample, octree-code the centroids, build patches
// around the decoded centroids, encode+quantize, arithmetic-code the latents
// under the context model. Throws FormatError when the model's (d,L,k)
// disagrees with K/alpha or the cloud is too small.
std::vector<uint8_t> compress_cloud(const PointCloud& cloud, const CodecModel& model,
                                    const CodecParams& params, CompressInfo* info = nullptr);

// Exact inverse of the latent channel; reconstructs m_decoded * k points in
// the original coordinate frame.
PointCloud decompress_cloud(std::span<const uint8_t> bytes, const CodecModel& model,
                            DecompressInfo* info = nullptr);

// Context pmfs for the decoded centroids as a flat (m*d)xL row-major block,
// floored for coding. Shared by both codec directions so the models match.
std::vector<double> coding_pmfs(const CodecModel& model, std::span<const Vec3> centroids);

constexpr double kProbFloor = 1e-12;

}  // namespace pcc
