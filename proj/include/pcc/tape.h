#pragma once

#include <functional>
#include <unordered_set>
#include <vector>

#include "pcc/tensor.h"

namespace pcc::nn {

// Reverse-mode tape. Ops append their output tensor and a backward closure;
// creation order is a topological order, so backward() just replays the
// closures in reverse. One backward per tape.
//
// Ops only propagate into inputs with needs_grad set, so inference runs
// through the same code path with constant leaves.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers an externally owned tensor (parameter or input). Its grad is
  // zeroed at the start of backward().
  TensorPtr leaf(const TensorPtr& t) {
    track(t);
    return t;
  }

  TensorPtr alloc(int64_t rows, int64_t cols, bool needs_grad) {
    auto t = make_tensor(rows, cols, needs_grad);
    track(t);
    return t;
  }

  // Extension point for domain ops defined outside this header.
  void push_backward(std::function<void()> fn) { steps_.push_back(std::move(fn)); }

  void track(const TensorPtr& t) {
    if (tracked_set_.insert(t.get()).second) tracked_.push_back(t);
  }

  // --- layer vocabulary ---------------------------------------------------

  // x:(R,a) w:(a,b) bias:(1,b) -> (R,b)
  TensorPtr linear(const TensorPtr& x, const TensorPtr& w, const TensorPtr& bias);
  TensorPtr relu(const TensorPtr& x);
  TensorPtr sigmoid(const TensorPtr& x);
  // Row-wise softmax; every output row sums to 1 and stays strictly positive.
  TensorPtr softmax_rows(const TensorPtr& x);
  // Column-wise max over consecutive blocks of group_rows rows.
  // (G*group_rows, C) -> (G, C). Ties keep the earliest row.
  TensorPtr max_pool_groups(const TensorPtr& x, int64_t group_rows);
  // Column concat with row broadcasting: the side with fewer rows is repeated
  // blockwise. (Ra,A)+(Rb,B) -> (max(Ra,Rb), A+B); max must be a multiple of
  // both row counts.
  TensorPtr concat_broadcast(const TensorPtr& a, const TensorPtr& b);
  // Row-major reinterpretation to new_cols columns.
  TensorPtr reshape_cols(const TensorPtr& x, int64_t new_cols);
  // Neighborhood expansion for set abstraction: x is (R,3), idx holds R*group
  // row indices. out[r*group+j] = x[idx[r*group+j]] - x[r].
  TensorPtr gather_diff(const TensorPtr& x, std::vector<int32_t> idx, int64_t group);

  // --- small algebra used to assemble losses -------------------------------

  TensorPtr scale(const TensorPtr& x, double s);
  TensorPtr add(const TensorPtr& a, const TensorPtr& b);
  TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
  TensorPtr mul(const TensorPtr& a, const TensorPtr& b);  // elementwise
  TensorPtr mean_all(const TensorPtr& x);
  TensorPtr sum_all(const TensorPtr& x);
  // out[r] = x[r] + offsets[r / group_rows]; offsets is a constant (G, C).
  TensorPtr add_rows_group(const TensorPtr& x, const Tensor& offsets, int64_t group_rows);
  // out[r] = x[r] * factors[r / group_rows]; factors is a constant, one per group.
  TensorPtr scale_rows_group(const TensorPtr& x, std::vector<double> factors, int64_t group_rows);

  // Seeds d(out)=1 and runs the recorded closures in reverse. out must be 1x1.
  void backward(const TensorPtr& out);

 private:
  std::vector<std::function<void()>> steps_;
  std::vector<TensorPtr> tracked_;
  std::unordered_set<const Tensor*> tracked_set_;
  bool backward_done_ = false;
};

}  // namespace pcc::nn
