#include "pcc/optim.h"

#include <algorithm>
#include <cmath>

namespace pcc::nn {

Optimizer::Optimizer(OptimizerKind kind, std::vector<TensorPtr> params, OptimizerOptions opts)
    : kind_(kind), params_(std::move(params)), opts_(opts) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(static_cast<size_t>(p->size()), 0.0);
    if (kind_ == OptimizerKind::kAdam) v_.emplace_back(static_cast<size_t>(p->size()), 0.0);
  }
}

void Optimizer::step() {
  ++step_count_;
  const double lr = opts_.learning_rate;
  if (kind_ == OptimizerKind::kAdam) {
    const double b1 = opts_.beta1, b2 = opts_.beta2;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
    for (size_t t = 0; t < params_.size(); ++t) {
      Tensor& p = *params_[t];
      p.ensure_grad();
      auto& m = m_[t];
      auto& v = v_[t];
      for (int64_t i = 0; i < p.size(); ++i) {
        const double g = p.grad[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        const double mh = m[i] / corr1;
        const double vh = v[i] / corr2;
        p.val[i] -= lr * mh / (std::sqrt(vh) + opts_.epsilon);
      }
    }
  } else {
    const double a = opts_.decay;
    for (size_t t = 0; t < params_.size(); ++t) {
      Tensor& p = *params_[t];
      p.ensure_grad();
      auto& sq = m_[t];
      for (int64_t i = 0; i < p.size(); ++i) {
        const double g = p.grad[i];
        sq[i] = a * sq[i] + (1.0 - a) * g * g;
        p.val[i] -= lr * g / (std::sqrt(sq[i]) + opts_.epsilon);
      }
    }
  }
}

void clip_parameters(const std::vector<TensorPtr>& params, double bound) {
  for (const auto& p : params)
    for (auto& w : p->val) w = std::clamp(w, -bound, bound);
}

}  // namespace pcc::nn
