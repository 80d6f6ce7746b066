#pragma once

#include <vector>

#include "pcc/tensor.h"

namespace pcc::nn {

enum class OptimizerKind { kAdam, kRmsprop };

struct OptimizerOptions {
  double learning_rate = 5e-4;
  // Adam
  double beta1 = 0.9;
  double beta2 = 0.999;
  // RMSprop
  double decay = 0.99;
  double epsilon = 1e-8;
};

// Per-parameter moment accumulators plus a shared step counter.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, std::vector<TensorPtr> params, OptimizerOptions opts = {});

  // Applies one update from the gradients currently stored on the parameters.
  void step();

  int64_t step_count() const { return step_count_; }
  OptimizerKind kind() const { return kind_; }
  const OptimizerOptions& options() const { return opts_; }

 private:
  OptimizerKind kind_;
  std::vector<TensorPtr> params_;
  OptimizerOptions opts_;
  std::vector<std::vector<double>> m_;  // first moment (Adam) / square average (RMSprop)
  std::vector<std::vector<double>> v_;  // second moment (Adam only)
  int64_t step_count_ = 0;
};

// Projects every parameter entry into [-bound, bound]; the critic calls this
// after each update.
void clip_parameters(const std::vector<TensorPtr>& params, double bound);

}  // namespace pcc::nn
