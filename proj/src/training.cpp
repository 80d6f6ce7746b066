#include "pcc/training.h"

#include <malloc.h>

#include <cmath>
#include <mutex>

#include "pcc/metrics.h"

namespace pcc {

using nn::Tape;
using nn::TensorPtr;

double TrainConfig::roc_or_default() const {
  if (roc > 0) return roc;
  switch (K) {
    case 1024: return 0.07;
    case 512: return 0.125;
    case 256: return 0.25;
    case 128: return 0.5;
    case 64: return 1.0;
    default: break;
  }
  // Off the published operating points: keep the byte budget per centroid
  // roughly level with the K=64 pairing.
  return std::clamp(64.0 / K, 0.05, 2.0);
}

PreparedCloud prepare_cloud(const PointCloud& cloud, const TrainConfig& config) {
  const size_t n = cloud.points.size();
  if (n == 0) throw std::invalid_argument("prepare_cloud: empty cloud");
  if (static_cast<size_t>(config.K) > n)
    throw std::invalid_argument("prepare_cloud: cloud smaller than K");
  const int64_t m = static_cast<int64_t>(config.alpha) * static_cast<int64_t>(n) / config.K;
  if (m < 1) throw std::invalid_argument("prepare_cloud: cloud too small for one patch");

  PreparedCloud out;
  out.n = n;
  const PointCloud normalized = normalize_cloud(cloud);
  out.transform = normalized.transform;
  out.reference = points_to_tensor(normalized.points);
  out.reference_tree = std::make_unique<KdTree>(normalized.points);

  std::vector<int32_t> picks = config.extended
                                   ? random_sample(n, m, config.seed)
                                   : farthest_point_sample(normalized.points, m);
  std::vector<Vec3> sampled;
  sampled.reserve(picks.size());
  for (int32_t i : picks) sampled.push_back(normalized.points[static_cast<size_t>(i)]);
  out.raw_centroid_bits = 96.0 * static_cast<double>(sampled.size());

  if (config.ablate_octree) {
    out.centroids = std::move(sampled);
    out.depth = 0;
    out.octree_bits = 0;
    out.centroid_bits = out.raw_centroid_bits;
  } else {
    out.depth = select_depth(n, sampled, config.roc_or_default());
    const OctreeStream stream = octree_encode(sampled, out.depth);
    out.octree_bits = 8.0 * static_cast<double>(stream.byte_count());
    out.centroids = octree_decode(stream);
    out.centroid_bits = out.octree_bits;
  }
  out.m = static_cast<int64_t>(out.centroids.size());
  out.centroid_tensor = points_to_tensor(out.centroids);

  out.density = config.extended ? 1.0 : density_factor(n, static_cast<size_t>(config.n0));
  out.patches =
      build_patches(normalized.points, *out.reference_tree, out.centroids, config.K, out.density);
  if (config.extended) apply_patch_unit_normalization(out.patches);
  out.patch_tensor = points_to_tensor(out.patches.points);
  return out;
}

double global_loss(std::span<const Vec3> source, std::span<const Vec3> recon, double rate_bpp,
                   double lambda) {
  return chamfer(source, recon) + lambda * rate_bpp;
}

TensorPtr chamfer_op(Tape& tape, const TensorPtr& recon, const nn::Tensor& reference,
                     const KdTree& reference_tree) {
  if (recon->cols != 3 || reference.cols != 3)
    throw std::invalid_argument("chamfer_op: expected 3 columns");
  tape.track(recon);
  const int64_t nr = recon->rows;
  const int64_t ns = reference.rows;
  const std::vector<Vec3> recon_pts = tensor_to_points(*recon);
  const KdTree recon_tree(recon_pts);

  auto fwd_idx = std::make_shared<std::vector<int32_t>>(static_cast<size_t>(ns));
  auto bwd_idx = std::make_shared<std::vector<int32_t>>(static_cast<size_t>(nr));
  double fwd_sum = 0.0, bwd_sum = 0.0;
  for (int64_t i = 0; i < ns; ++i) {
    const Vec3 s{reference.val[3 * i], reference.val[3 * i + 1], reference.val[3 * i + 2]};
    const auto hit = recon_tree.nearest(s);
    (*fwd_idx)[static_cast<size_t>(i)] = hit.index;
    fwd_sum += hit.d2;
  }
  for (int64_t r = 0; r < nr; ++r) {
    const auto hit = reference_tree.nearest(recon_pts[static_cast<size_t>(r)]);
    (*bwd_idx)[static_cast<size_t>(r)] = hit.index;
    bwd_sum += hit.d2;
  }
  auto out = tape.alloc(1, 1, recon->needs_grad);
  out->val[0] = fwd_sum / static_cast<double>(ns) + bwd_sum / static_cast<double>(nr);

  if (recon->needs_grad) {
    const nn::Tensor* ref = &reference;
    tape.push_backward([recon, out, fwd_idx, bwd_idx, ref, ns, nr]() {
      recon->ensure_grad();
      const double g = out->grad[0];
      const double wf = 2.0 * g / static_cast<double>(ns);
      for (int64_t i = 0; i < ns; ++i) {
        const int64_t r = (*fwd_idx)[static_cast<size_t>(i)];
        for (int64_t c = 0; c < 3; ++c)
          recon->grad[3 * r + c] += wf * (recon->val[3 * r + c] - ref->val[3 * i + c]);
      }
      const double wb = 2.0 * g / static_cast<double>(nr);
      for (int64_t r = 0; r < nr; ++r) {
        const int64_t i = (*bwd_idx)[static_cast<size_t>(r)];
        for (int64_t c = 0; c < 3; ++c)
          recon->grad[3 * r + c] += wb * (recon->val[3 * r + c] - ref->val[3 * i + c]);
      }
    });
  }
  return out;
}

TensorPtr chamfer_groups_op(Tape& tape, const TensorPtr& recon, int64_t k,
                            const nn::Tensor& reference, int64_t K) {
  if (recon->cols != 3 || reference.cols != 3)
    throw std::invalid_argument("chamfer_groups_op: expected 3 columns");
  if (recon->rows % k != 0 || reference.rows % K != 0 ||
      recon->rows / k != reference.rows / K)
    throw std::invalid_argument("chamfer_groups_op: group counts disagree");
  tape.track(recon);
  const int64_t m = recon->rows / k;
  auto fwd_idx = std::make_shared<std::vector<int32_t>>(static_cast<size_t>(reference.rows));
  auto bwd_idx = std::make_shared<std::vector<int32_t>>(static_cast<size_t>(recon->rows));
  double total = 0.0;
  for (int64_t g = 0; g < m; ++g) {
    double fwd = 0.0, bwd = 0.0;
    for (int64_t i = 0; i < K; ++i) {
      const int64_t ri = 3 * (g * K + i);
      double best = 0.0;
      int32_t arg = -1;
      for (int64_t j = 0; j < k; ++j) {
        const int64_t rj = 3 * (g * k + j);
        const double dx = reference.val[ri] - recon->val[rj];
        const double dy = reference.val[ri + 1] - recon->val[rj + 1];
        const double dz = reference.val[ri + 2] - recon->val[rj + 2];
        const double d2 = dx * dx + dy * dy + dz * dz;
        if (arg < 0 || d2 < best) {
          best = d2;
          arg = static_cast<int32_t>(g * k + j);
        }
      }
      (*fwd_idx)[static_cast<size_t>(g * K + i)] = arg;
      fwd += best;
    }
    for (int64_t j = 0; j < k; ++j) {
      const int64_t rj = 3 * (g * k + j);
      double best = 0.0;
      int32_t arg = -1;
      for (int64_t i = 0; i < K; ++i) {
        const int64_t ri = 3 * (g * K + i);
        const double dx = recon->val[rj] - reference.val[ri];
        const double dy = recon->val[rj + 1] - reference.val[ri + 1];
        const double dz = recon->val[rj + 2] - reference.val[ri + 2];
        const double d2 = dx * dx + dy * dy + dz * dz;
        if (arg < 0 || d2 < best) {
          best = d2;
          arg = static_cast<int32_t>(g * K + i);
        }
      }
      (*bwd_idx)[static_cast<size_t>(g * k + j)] = arg;
      bwd += best;
    }
    total += fwd / static_cast<double>(K) + bwd / static_cast<double>(k);
  }
  auto out = tape.alloc(1, 1, recon->needs_grad);
  out->val[0] = total / static_cast<double>(m);

  if (recon->needs_grad) {
    const nn::Tensor* ref = &reference;
    tape.push_backward([recon, out, fwd_idx, bwd_idx, ref, m, k, K]() {
      recon->ensure_grad();
      const double g = out->grad[0];
      const double wf = 2.0 * g / (static_cast<double>(m) * static_cast<double>(K));
      for (int64_t i = 0; i < ref->rows; ++i) {
        const int64_t r = (*fwd_idx)[static_cast<size_t>(i)];
        for (int64_t c = 0; c < 3; ++c)
          recon->grad[3 * r + c] += wf * (recon->val[3 * r + c] - ref->val[3 * i + c]);
      }
      const double wb = 2.0 * g / (static_cast<double>(m) * static_cast<double>(k));
      for (int64_t r = 0; r < recon->rows; ++r) {
        const int64_t i = (*bwd_idx)[static_cast<size_t>(r)];
        for (int64_t c = 0; c < 3; ++c)
          recon->grad[3 * r + c] += wb * (recon->val[3 * r + c] - ref->val[3 * i + c]);
      }
    });
  }
  return out;
}

namespace {

struct PipelineOut {
  TensorPtr rel;       // (m*k,3) scaled relative frame
  TensorPtr recon;     // (m*k,3) normalized frame
  TensorPtr dcd;       // distortion scalar
  TensorPtr rate_bpp;  // scalar, constant under ablate_context
  std::vector<uint8_t> codes;
};

PipelineOut build_pipeline(Tape& tape, const PreparedCloud& prep, CodecModel& model,
                           const TrainConfig& config) {
  PipelineOut out;
  auto patches = std::make_shared<nn::Tensor>(prep.patch_tensor);
  auto latents = model.encode(tape, patches, prep.m);
  auto quantized = model.ste_quantize(tape, latents, &out.codes);
  out.rel = model.decode(tape, quantized, prep.m);

  TensorPtr unscaled =
      config.extended
          ? tape.scale_rows_group(out.rel, prep.patches.patch_scales, model.dims().k)
          : tape.scale(out.rel, 1.0 / prep.density);
  out.recon = tape.add_rows_group(unscaled, prep.centroid_tensor, model.dims().k);

  if (config.ablate_global) {
    out.dcd = chamfer_groups_op(tape, out.rel, model.dims().k, prep.patch_tensor, config.K);
  } else {
    out.dcd = chamfer_op(tape, out.recon, prep.reference, *prep.reference_tree);
  }

  if (config.ablate_context) {
    auto uniform = tape.alloc(1, 1, false);
    uniform->val[0] = static_cast<double>(prep.m) * model.dims().d *
                      std::log2(static_cast<double>(model.dims().L)) /
                      static_cast<double>(prep.n);
    out.rate_bpp = uniform;
  } else {
    auto centroids = std::make_shared<nn::Tensor>(prep.centroid_tensor);
    auto pmfs = model.context_pmfs(tape, centroids, prep.m);
    auto bits = model.rate_bits(tape, pmfs, out.codes, kProbFloor);
    out.rate_bpp = tape.scale(bits, 1.0 / static_cast<double>(prep.n));
  }
  return out;
}

}  // namespace

namespace {

// Each step frees a few hundred MB of activation buffers. Left to its
// defaults glibc serves those from mmap and returns them to the kernel every
// step, and the page churn roughly doubles the step time. Keep freed blocks
// on the heap instead.
void pin_heap_once() {
  static std::once_flag flag;
  std::call_once(flag, []() {
    mallopt(M_MMAP_MAX, 0);
    mallopt(M_TRIM_THRESHOLD, -1);
  });
}

}  // namespace

StepStats train_step(const PreparedCloud& prep, CodecModel& model, nn::Optimizer& opt,
                     const TrainConfig& config) {
  pin_heap_once();
  model.set_requires_grad(true);
  Tape tape;
  PipelineOut p = build_pipeline(tape, prep, model, config);
  auto loss = tape.add(p.dcd, tape.scale(p.rate_bpp, config.lambda));
  tape.backward(loss);
  opt.step();
  return {loss->val[0], p.dcd->val[0], p.rate_bpp->val[0]};
}

nn::Optimizer make_codec_optimizer(const CodecModel& model, const TrainConfig& config) {
  nn::OptimizerOptions opts;
  opts.learning_rate = config.learning_rate;
  const auto kind = config.mode == TrainMode::kAdversarial ? nn::OptimizerKind::kRmsprop
                                                           : nn::OptimizerKind::kAdam;
  return nn::Optimizer(kind, model.params(), opts);
}

nn::Network make_critic(const ModelDims& dims, uint64_t seed) {
  using nn::LayerSpec;
  std::vector<LayerSpec> spec{
      LayerSpec::sapp(dims.sapp_group, dims.enc_sapp), LayerSpec::concat_input(),
      LayerSpec::smlp(dims.enc_pn), LayerSpec::pool(),
      LayerSpec::mlp({dims.d, 256, dims.k * 128, 128, 1}, /*activate_output=*/false)};
  return nn::Network(std::move(spec), seed);
}

double discriminator_loss_value(std::span<const double> real_scores,
                                std::span<const double> fake_scores) {
  if (real_scores.size() != fake_scores.size() || real_scores.empty())
    throw std::invalid_argument("discriminator_loss: need equal nonempty batches");
  double sum = 0.0;
  for (size_t i = 0; i < real_scores.size(); ++i) sum += real_scores[i] - fake_scores[i];
  return -sum / static_cast<double>(real_scores.size());
}

double generator_loss_value(double dcd, double rate_bpp, std::span<const double> fake_scores,
                            double lambda1, double lambda2) {
  double adv = 0.0;
  for (double s : fake_scores) adv -= s;
  adv /= static_cast<double>(fake_scores.size());
  return dcd + lambda1 * rate_bpp + lambda2 * adv;
}

CriticStepStats critic_step(nn::Network& critic, const nn::Tensor& real, int64_t m_real,
                            const nn::Tensor& fake, int64_t m_fake, nn::Optimizer& opt,
                            double clip_bound) {
  critic.set_requires_grad(true);
  Tape tape;
  auto real_in = std::make_shared<nn::Tensor>(real);
  auto fake_in = std::make_shared<nn::Tensor>(fake);
  auto real_scores = critic.forward(tape, real_in, m_real);
  auto fake_scores = critic.forward(tape, fake_in, m_fake);
  auto loss = tape.sub(tape.mean_all(fake_scores), tape.mean_all(real_scores));
  tape.backward(loss);
  opt.step();
  clip_parameters(critic.params(), clip_bound);
  return {loss->val[0], -loss->val[0]};
}

GanRoundStats train_gan_round(const PreparedCloud& prep, CodecModel& generator,
                              nn::Network& critic, nn::Optimizer& gen_opt,
                              nn::Optimizer& critic_opt, const TrainConfig& config) {
  pin_heap_once();
  GanRoundStats stats;

  // Current reconstructions, frozen while the critic trains.
  nn::Tensor fake;
  {
    generator.set_requires_grad(false);
    Tape tape;
    PipelineOut p = build_pipeline(tape, prep, generator, config);
    fake = *p.rel;
    fake.needs_grad = false;
    fake.grad.clear();
  }
  for (int t = 0; t < config.critic_steps; ++t) {
    const auto cs = critic_step(critic, prep.patch_tensor, prep.m, fake, prep.m, critic_opt,
                                config.clip_bound);
    stats.loss_d = cs.loss_d;
  }

  // Generator update through the frozen critic.
  generator.set_requires_grad(true);
  critic.set_requires_grad(false);
  Tape tape;
  PipelineOut p = build_pipeline(tape, prep, generator, config);
  auto fake_scores = critic.forward(tape, p.rel, prep.m);
  auto adv = tape.scale(tape.mean_all(fake_scores), -1.0);
  auto loss = tape.add(tape.add(p.dcd, tape.scale(p.rate_bpp, config.lambda)),
                       tape.scale(adv, config.lambda2));
  tape.backward(loss);
  gen_opt.step();
  critic.set_requires_grad(true);

  stats.loss_g = loss->val[0];
  stats.dcd = p.dcd->val[0];
  stats.rate_bpp = p.rate_bpp->val[0];
  return stats;
}

}  // namespace pcc
