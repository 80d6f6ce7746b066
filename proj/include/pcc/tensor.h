#pragma once

#include <cassert>
#include <cstdint>
#include <memory>
#include <vector>

namespace pcc::nn {

// Dense row-major matrix of doubles. All training math runs in 64-bit; the
// weight file narrows to 32-bit on disk.
struct Tensor {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<double> val;
  std::vector<double> grad;  // sized on demand by the tape
  bool needs_grad = false;

  Tensor() = default;
  Tensor(int64_t r, int64_t c, bool ng = false)
      : rows(r), cols(c), val(static_cast<size_t>(r * c), 0.0), needs_grad(ng) {
    assert(r >= 0 && c >= 0);
  }

  int64_t size() const { return rows * cols; }

  double& at(int64_t r, int64_t c) { return val[static_cast<size_t>(r * cols + c)]; }
  double at(int64_t r, int64_t c) const { return val[static_cast<size_t>(r * cols + c)]; }

  void ensure_grad() {
    if (grad.size() != val.size()) grad.assign(val.size(), 0.0);
  }
  void zero_grad() {
    ensure_grad();
    std::fill(grad.begin(), grad.end(), 0.0);
  }
};

using TensorPtr = std::shared_ptr<Tensor>;

inline TensorPtr make_tensor(int64_t rows, int64_t cols, bool needs_grad = false) {
  return std::make_shared<Tensor>(rows, cols, needs_grad);
}

}  // namespace pcc::nn
