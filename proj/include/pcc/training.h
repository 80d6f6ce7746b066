#pragma once

#include <memory>
#include <optional>
#include <span>

#include "pcc/codec.h"
#include "pcc/optim.h"

namespace pcc {

enum class TrainMode { kPlain, kAdversarial };

struct TrainConfig {
  int K = 64;
  int alpha = 2;
  int L = 7;
  int d = 16;
  int n0 = 1024;
  double lambda = 1e-6;   // rate weight (also the adversarial run's lambda1)
  double lambda2 = 1e-3;  // adversarial weight
  double learning_rate = 5e-4;
  int epochs = 8;
  uint64_t seed = 1;
  TrainMode mode = TrainMode::kPlain;
  double roc = 0.0;  // 0 picks the paired default for K
  bool extended = false;
  // Ablation arms, selectable purely by config.
  bool ablate_context = false;  // uniform pmfs instead of the context model
  bool ablate_octree = false;   // raw centroids, 96 bits each
  bool ablate_global = false;   // mean per-patch distortion instead of whole-cloud
  double clip_bound = 0.01;     // critic weight clip
  int critic_steps = 5;

  int k() const { return K / alpha; }
  double roc_or_default() const;
};

// Everything about one cloud that does not change across steps: the
// normalized reference, sampling, centroid coding and patch construction.
struct PreparedCloud {
  size_t n = 0;
  NormTransform transform;
  nn::Tensor reference;  // (n,3), normalized frame
  std::unique_ptr<KdTree> reference_tree;
  std::vector<Vec3> centroids;  // decoded (raw FPS points under ablate_octree)
  nn::Tensor centroid_tensor;   // (m,3)
  PatchSet patches;
  nn::Tensor patch_tensor;  // (m*K,3), scaled relative frame
  int64_t m = 0;
  int depth = 0;
  double octree_bits = 0;
  double raw_centroid_bits = 0;  // 96 per sampled centroid
  double centroid_bits = 0;      // the arm actually in use
  double density = 1.0;
};

PreparedCloud prepare_cloud(const PointCloud& cloud, const TrainConfig& config);

// Whole-cloud training objective on plain values.
double global_loss(std::span<const Vec3> source, std::span<const Vec3> recon, double rate_bpp,
                   double lambda);

// Squared-chamfer tape node against a fixed reference; nearest-neighbour
// assignments freeze at forward time.
nn::TensorPtr chamfer_op(nn::Tape& tape, const nn::TensorPtr& recon, const nn::Tensor& reference,
                         const KdTree& reference_tree);

// Mean over patches of the per-patch chamfer, recon grouped by k rows and
// reference by K rows. Drives the patch-criterion ablation.
nn::TensorPtr chamfer_groups_op(nn::Tape& tape, const nn::TensorPtr& recon, int64_t k,
                                const nn::Tensor& reference, int64_t K);

struct StepStats {
  double loss = 0;
  double dcd = 0;
  double rate_bpp = 0;
};

// One forward + backward + optimizer update. The octree path stays fixed
// inside the step; only the patch and latent paths carry gradients.
StepStats train_step(const PreparedCloud& prepared, CodecModel& model, nn::Optimizer& opt,
                     const TrainConfig& config);

// Fresh codec optimizer matching the config (Adam for plain, RMSprop for the
// adversarial generator).
nn::Optimizer make_codec_optimizer(const CodecModel& model, const TrainConfig& config);

// --- adversarial refinement --------------------------------------------------

// Patch realism critic; accepts patches of either K or k points.
nn::Network make_critic(const ModelDims& dims, uint64_t seed);

// Eq-style critic objective: -(mean(real) - mean(fake)).
double discriminator_loss_value(std::span<const double> real_scores,
                                std::span<const double> fake_scores);
// Full generator objective: dcd + lambda1*rate + lambda2*mean(-fake_scores).
double generator_loss_value(double dcd, double rate_bpp, std::span<const double> fake_scores,
                            double lambda1, double lambda2);

struct CriticStepStats {
  double loss_d = 0;
  double gap = 0;  // mean(real) - mean(fake) at the pre-update weights
};

// One critic update on fixed patch batches, followed by the weight clip.
CriticStepStats critic_step(nn::Network& critic, const nn::Tensor& real, int64_t m_real,
                            const nn::Tensor& fake, int64_t m_fake, nn::Optimizer& opt,
                            double clip_bound);

struct GanRoundStats {
  double loss_d = 0;  // last critic step
  double loss_g = 0;
  double dcd = 0;
  double rate_bpp = 0;
};

// critic_steps critic updates on the current reconstructions, then one
// generator update through the critic.
GanRoundStats train_gan_round(const PreparedCloud& prepared, CodecModel& generator,
                              nn::Network& critic, nn::Optimizer& gen_opt,
                              nn::Optimizer& critic_opt, const TrainConfig& config);

}  // namespace pcc
