#include "pcc/codec.h"

#include <algorithm>
#include <cmath>

#include "pcc/common.h"
#include "pcc/range_coder.h"

namespace pcc {

namespace {

// Bound tape memory on large clouds: patches run through the networks in
// blocks of roughly this many rows.
constexpr int64_t kChunkRows = 1 << 16;

std::vector<uint8_t> encode_codes(const CodecModel& model, const PatchSet& patches) {
  const int64_t m = static_cast<int64_t>(patches.centroids.size());
  const int64_t K = patches.patch_size;
  const int64_t chunk = std::max<int64_t>(1, kChunkRows / K);
  const int L = model.dims().L;
  std::vector<uint8_t> codes;
  codes.reserve(static_cast<size_t>(m) * model.dims().d);
  for (int64_t first = 0; first < m; first += chunk) {
    const int64_t count = std::min(chunk, m - first);
    nn::Tensor block(count * K, 3);
    for (int64_t r = 0; r < count * K; ++r) {
      const Vec3& p = patches.points[static_cast<size_t>(first * K + r)];
      block.val[3 * r] = p.x;
      block.val[3 * r + 1] = p.y;
      block.val[3 * r + 2] = p.z;
    }
    const nn::Tensor latents = model.eval_encode(block, count);
    for (double y : latents.val) codes.push_back(quantize_code(y, L));
  }
  return codes;
}

std::vector<Vec3> decode_relative(const CodecModel& model, std::span<const uint8_t> codes,
                                  int64_t m) {
  const int d = model.dims().d;
  const int64_t k = model.dims().k;
  const int64_t chunk = std::max<int64_t>(1, kChunkRows / k);
  std::vector<Vec3> rel;
  rel.reserve(static_cast<size_t>(m * k));
  for (int64_t first = 0; first < m; first += chunk) {
    const int64_t count = std::min(chunk, m - first);
    nn::Tensor latents(count, d);
    for (int64_t i = 0; i < count * d; ++i)
      latents.val[i] = dequantize_code(codes[static_cast<size_t>(first * d + i)]);
    const nn::Tensor out = model.eval_decode(latents, count);
    for (int64_t r = 0; r < out.rows; ++r)
      rel.push_back({out.val[3 * r], out.val[3 * r + 1], out.val[3 * r + 2]});
  }
  return rel;
}

}  // namespace

std::vector<double> coding_pmfs(const CodecModel& model, std::span<const Vec3> centroids) {
  const nn::Tensor pm =
      model.eval_context_pmfs(points_to_tensor(centroids), static_cast<int64_t>(centroids.size()));
  std::vector<double> out(pm.val);
  for (double& p : out) p = std::max(p, kProbFloor);
  return out;
}

std::vector<uint8_t> compress_cloud(const PointCloud& cloud, const CodecModel& model,
                                    const CodecParams& params, CompressInfo* info) {
  const size_t n = cloud.points.size();
  if (n == 0) throw std::invalid_argument("compress: empty cloud");
  if (params.K < 1 || params.alpha < 1) throw FormatError("compress: bad K or alpha");
  if (model.dims().k != params.K / params.alpha)
    throw FormatError("compress: weights built for k=" + std::to_string(model.dims().k) +
                      ", flags imply k=" + std::to_string(params.K / params.alpha));
  if (static_cast<size_t>(params.K) > n) throw FormatError("compress: cloud smaller than K");
  const int64_t m = static_cast<int64_t>(params.alpha) * static_cast<int64_t>(n) / params.K;
  if (m < 1) throw FormatError("compress: cloud too small for one patch");

  const PointCloud normalized = normalize_cloud(cloud);
  std::vector<int32_t> picks =
      params.extended ? random_sample(n, m, params.seed)
                      : farthest_point_sample(normalized.points, m);
  std::vector<Vec3> sampled;
  sampled.reserve(picks.size());
  for (int32_t i : picks) sampled.push_back(normalized.points[static_cast<size_t>(i)]);

  const int depth = select_depth(n, sampled, params.roc);
  OctreeStream octree = octree_encode(sampled, depth);
  const std::vector<Vec3> centroids = octree_decode(octree);

  const KdTree tree(normalized.points);
  const double density = params.extended ? 1.0 : density_factor(n, kReferenceCount);
  PatchSet patches = build_patches(normalized.points, tree, centroids, params.K, density);
  if (params.extended) apply_patch_unit_normalization(patches);

  const std::vector<uint8_t> codes = encode_codes(model, patches);
  const std::vector<double> pmfs = coding_pmfs(model, centroids);
  const std::vector<uint8_t> latent =
      ac_encode(codes, pmfs, static_cast<size_t>(model.dims().L));

  CompressedCloud c;
  c.flags = params.extended ? kFlagExtended : 0;
  c.n = static_cast<uint32_t>(n);
  c.K = static_cast<uint16_t>(params.K);
  c.k = static_cast<uint16_t>(model.dims().k);
  c.d = static_cast<uint8_t>(model.dims().d);
  c.L = static_cast<uint8_t>(model.dims().L);
  c.transform = normalized.transform;
  c.octree = std::move(octree);
  if (params.extended) {
    c.patch_scales.reserve(patches.patch_scales.size());
    for (double s : patches.patch_scales) c.patch_scales.push_back(static_cast<float>(s));
  }
  c.latent = latent;
  std::vector<uint8_t> bytes = pack(c);

  if (info) {
    info->m = static_cast<size_t>(m);
    info->m_decoded = centroids.size();
    info->depth = depth;
    info->total_bytes = bytes.size();
    info->octree_payload_bytes = c.octree.bytes.size();
    info->latent_payload_bytes = latent.size();
    info->bpp = 8.0 * static_cast<double>(bytes.size()) / static_cast<double>(n);
    info->est_rate_bpp =
        estimate_rate_bpp(pmfs, codes, static_cast<size_t>(model.dims().L), n, kProbFloor);
    info->codes = codes;
  }
  return bytes;
}

PointCloud decompress_cloud(std::span<const uint8_t> bytes, const CodecModel& model,
                            DecompressInfo* info) {
  const CompressedCloud c = unpack(bytes);
  const ModelDims& dims = model.dims();
  if (c.d != dims.d || c.L != dims.L || c.k != dims.k)
    throw FormatError("decompress: container (d,L,k) disagrees with the weights");

  const std::vector<Vec3> centroids = octree_decode(c.octree);
  const int64_t m = static_cast<int64_t>(centroids.size());
  const std::vector<double> pmfs = coding_pmfs(model, centroids);
  const std::vector<uint8_t> codes =
      ac_decode(c.latent, pmfs, static_cast<size_t>(m) * dims.d, static_cast<size_t>(dims.L));

  std::vector<Vec3> rel = decode_relative(model, codes, m);
  if (c.extended()) {
    for (int64_t i = 0; i < m; ++i) {
      const double s = static_cast<double>(c.patch_scales[static_cast<size_t>(i)]);
      for (int64_t j = 0; j < dims.k; ++j) rel[static_cast<size_t>(i * dims.k + j)] =
          rel[static_cast<size_t>(i * dims.k + j)] * s;
    }
  } else {
    const double inv = 1.0 / density_factor(c.n, kReferenceCount);
    for (Vec3& p : rel) p = p * inv;
  }

  PointCloud out = reassemble_cloud(centroids, rel, dims.k, c.transform);
  if (info) {
    info->m_decoded = static_cast<size_t>(m);
    info->depth = c.octree.depth;
    info->codes = codes;
  }
  return out;
}

}  // namespace pcc
