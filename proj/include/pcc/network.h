#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pcc/tape.h"

namespace pcc::nn {

// Layer vocabulary. SMLP applies a dense chain to every row independently;
// MLP is the same math on a one-row-per-group activation; SAPP gathers each
// point's nearest in-patch neighbours, lifts the relative coordinates through
// a shared chain and max-pools over the neighbourhood.
enum class LayerKind {
  kSmlp,
  kMlp,
  kSapp,
  kPointnetPool,
  kSigmoid,
  kSoftmaxLast,
  kReshape,
  kConcatBroadcast,
};

struct LayerSpec {
  LayerKind kind;
  std::vector<int> widths;       // SMLP/MLP/SAPP chains, first entry = input width
  int group_size = 0;            // SAPP neighbourhood size
  int reshape_cols = 0;          // RESHAPE target column count
  bool activate_output = true;   // rectifier after the chain's last layer

  static LayerSpec smlp(std::vector<int> widths, bool activate_output = true) {
    return {LayerKind::kSmlp, std::move(widths), 0, 0, activate_output};
  }
  static LayerSpec mlp(std::vector<int> widths, bool activate_output = true) {
    return {LayerKind::kMlp, std::move(widths), 0, 0, activate_output};
  }
  static LayerSpec sapp(int group_size, std::vector<int> widths) {
    return {LayerKind::kSapp, std::move(widths), group_size, 0, true};
  }
  static LayerSpec pool() { return {LayerKind::kPointnetPool, {}, 0, 0, true}; }
  static LayerSpec sigmoid() { return {LayerKind::kSigmoid, {}, 0, 0, true}; }
  static LayerSpec softmax_last() { return {LayerKind::kSoftmaxLast, {}, 0, 0, true}; }
  static LayerSpec reshape(int cols) { return {LayerKind::kReshape, {}, 0, cols, true}; }
  static LayerSpec concat_input() { return {LayerKind::kConcatBroadcast, {}, 0, 0, true}; }
};

// A feed-forward graph over grouped rows. The group count is the batch axis:
// POINTNET_POOL reduces each group to one row and CONCAT_BROADCAST joins the
// network input back onto the current activation, repeating rows as needed.
// Hidden layers are rectified; a chain built with activate_output=false
// leaves its last affine layer bare.
class Network {
 public:
  Network(std::vector<LayerSpec> spec, uint64_t seed);

  // input rows must be a multiple of groups. Propagates gradients whenever
  // the input tensor or the parameters have needs_grad set.
  TensorPtr forward(Tape& tape, const TensorPtr& input, int64_t groups) const;

  // Convenience wrapper for inference: runs a throwaway tape on constant input.
  Tensor eval(const Tensor& input, int64_t groups) const;

  const std::vector<TensorPtr>& params() const { return params_; }
  const std::vector<LayerSpec>& spec() const { return spec_; }
  void set_requires_grad(bool on);

 private:
  std::vector<LayerSpec> spec_;
  std::vector<TensorPtr> params_;           // W,b per affine layer, graph order
  std::vector<std::pair<int, int>> chains_;  // per layer entry: [first_param, count)
};

// Uniform init in [-sqrt(1/fan_in), +sqrt(1/fan_in)] for weights and biases.
void init_affine(Tensor& w, Tensor& b, std::mt19937_64& rng);

// Relative agreement between analytic gradients of sum(output) and central
// finite differences, over a deterministic sample of parameter and input
// entries. Denominator floored at 1e-6 so near-zero pairs compare absolutely.
struct GradCheckReport {
  double max_rel_err = 0.0;
  int checked = 0;
};
GradCheckReport grad_check(Network& net, const Tensor& input, int64_t groups,
                           double fd_step = 1e-5, int max_checks = 400, uint64_t seed = 7);

// Weight file ("IPDW"): version byte, tensor count, then per tensor the rank,
// 32-bit little-endian extents and 32-bit little-endian float values.
void save_weights(const std::string& path, const std::vector<TensorPtr>& tensors);
// Loads into existing tensors; extents must match exactly.
void load_weights(const std::string& path, const std::vector<TensorPtr>& tensors);

}  // namespace pcc::nn
