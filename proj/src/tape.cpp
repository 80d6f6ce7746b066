#include "pcc/tape.h"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pcc::nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<RowMat>;
using CMap = Eigen::Map<const RowMat>;

namespace {

CMap values(const Tensor& t) { return CMap(t.val.data(), t.rows, t.cols); }
Map grads(Tensor& t) {
  t.ensure_grad();
  return Map(t.grad.data(), t.rows, t.cols);
}

// Forward affine kernel with row-stable bits: every output element is the
// bias followed by exactly one multiply and one add per k, k ascending. The
// result for a row depends only on its contents, never on which row slot it
// occupies or how the loops are tiled, which is what makes pooling and the
// patch encoder exactly permutation-invariant. (A stock GEMM interleaves its
// accumulations differently between full and remainder row panels.) The
// vector and scalar paths round identically because the build pins
// -ffp-contract=off.
constexpr int64_t kRowBlock = 4;
constexpr int64_t kColTile = 16;

using v8d = double __attribute__((vector_size(64), aligned(8)));

inline v8d load8(const double* p) { return *reinterpret_cast<const v8d*>(p); }
inline void store8(double* p, v8d v) { *reinterpret_cast<v8d*>(p) = v; }

// Hot path: full 4x16 tile held in named vector accumulators.
inline void affine_tile_full(const double* x, int64_t r0, int64_t depth, const double* w,
                             int64_t cols, int64_t c0, const double* bias, double* out) {
  const v8d b0 = load8(bias + c0);
  const v8d b1 = load8(bias + c0 + 8);
  v8d a00 = b0, a01 = b1, a10 = b0, a11 = b1;
  v8d a20 = b0, a21 = b1, a30 = b0, a31 = b1;
  const double* x0 = x + (r0 + 0) * depth;
  const double* x1 = x + (r0 + 1) * depth;
  const double* x2 = x + (r0 + 2) * depth;
  const double* x3 = x + (r0 + 3) * depth;
  for (int64_t k = 0; k < depth; ++k) {
    const double* wk = w + k * cols + c0;
    const v8d w0 = load8(wk);
    const v8d w1 = load8(wk + 8);
    const v8d v0 = v8d{} + x0[k];
    a00 += v0 * w0;
    a01 += v0 * w1;
    const v8d v1 = v8d{} + x1[k];
    a10 += v1 * w0;
    a11 += v1 * w1;
    const v8d v2 = v8d{} + x2[k];
    a20 += v2 * w0;
    a21 += v2 * w1;
    const v8d v3 = v8d{} + x3[k];
    a30 += v3 * w0;
    a31 += v3 * w1;
  }
  double* o0 = out + (r0 + 0) * cols + c0;
  double* o1 = out + (r0 + 1) * cols + c0;
  double* o2 = out + (r0 + 2) * cols + c0;
  double* o3 = out + (r0 + 3) * cols + c0;
  store8(o0, a00);
  store8(o0 + 8, a01);
  store8(o1, a10);
  store8(o1 + 8, a11);
  store8(o2, a20);
  store8(o2 + 8, a21);
  store8(o3, a30);
  store8(o3 + 8, a31);
}

void affine_edge(const double* x, int64_t r0, int64_t rb, int64_t depth, const double* w,
                 int64_t cols, int64_t c0, int64_t tw, const double* bias, double* out) {
  for (int64_t r = r0; r < r0 + rb; ++r) {
    double acc[kColTile];
    for (int64_t t = 0; t < tw; ++t) acc[t] = bias[c0 + t];
    const double* xr = x + r * depth;
    for (int64_t k = 0; k < depth; ++k) {
      const double xv = xr[k];
      const double* wk = w + k * cols + c0;
      for (int64_t t = 0; t < tw; ++t) acc[t] += xv * wk[t];
    }
    for (int64_t t = 0; t < tw; ++t) out[r * cols + c0 + t] = acc[t];
  }
}

void affine_rows(const Tensor& x, const Tensor& w, const Tensor& bias, Tensor& out) {
  const int64_t rows = x.rows, depth = x.cols, cols = w.cols;
  for (int64_t r0 = 0; r0 < rows; r0 += kRowBlock) {
    const int64_t rb = std::min(kRowBlock, rows - r0);
    for (int64_t c0 = 0; c0 < cols; c0 += kColTile) {
      const int64_t tw = std::min(kColTile, cols - c0);
      if (rb == kRowBlock && tw == kColTile)
        affine_tile_full(x.val.data(), r0, depth, w.val.data(), cols, c0, bias.val.data(),
                         out.val.data());
      else
        affine_edge(x.val.data(), r0, rb, depth, w.val.data(), cols, c0, tw, bias.val.data(),
                    out.val.data());
    }
  }
}

}  // namespace

TensorPtr Tape::linear(const TensorPtr& x, const TensorPtr& w, const TensorPtr& bias) {
  if (x->cols != w->rows) throw std::invalid_argument("linear: inner extents disagree");
  if (bias->rows != 1 || bias->cols != w->cols)
    throw std::invalid_argument("linear: bias extent disagrees");
  track(x);
  track(w);
  track(bias);
  auto out = alloc(x->rows, w->cols, x->needs_grad || w->needs_grad || bias->needs_grad);
  affine_rows(*x, *w, *bias, *out);
  push_backward([x, w, bias, out]() {
    CMap gy(out->grad.data(), out->rows, out->cols);
    if (x->needs_grad) grads(*x).noalias() += gy * values(*w).transpose();
    if (w->needs_grad) grads(*w).noalias() += values(*x).transpose() * gy;
    if (bias->needs_grad)
      Eigen::Map<Eigen::RowVectorXd>(bias->grad.data(), bias->cols) += gy.colwise().sum();
  });
  return out;
}

TensorPtr Tape::relu(const TensorPtr& x) {
  track(x);
  auto out = alloc(x->rows, x->cols, x->needs_grad);
  for (int64_t i = 0; i < x->size(); ++i) out->val[i] = x->val[i] > 0.0 ? x->val[i] : 0.0;
  if (x->needs_grad) {
    push_backward([x, out]() {
      x->ensure_grad();
      for (int64_t i = 0; i < x->size(); ++i)
        if (x->val[i] > 0.0) x->grad[i] += out->grad[i];
    });
  }
  return out;
}

TensorPtr Tape::sigmoid(const TensorPtr& x) {
  track(x);
  auto out = alloc(x->rows, x->cols, x->needs_grad);
  for (int64_t i = 0; i < x->size(); ++i) out->val[i] = 1.0 / (1.0 + std::exp(-x->val[i]));
  if (x->needs_grad) {
    push_backward([x, out]() {
      x->ensure_grad();
      for (int64_t i = 0; i < x->size(); ++i) {
        const double s = out->val[i];
        x->grad[i] += out->grad[i] * s * (1.0 - s);
      }
    });
  }
  return out;
}

TensorPtr Tape::softmax_rows(const TensorPtr& x) {
  track(x);
  auto out = alloc(x->rows, x->cols, x->needs_grad);
  const int64_t c = x->cols;
  for (int64_t r = 0; r < x->rows; ++r) {
    const double* in = x->val.data() + r * c;
    double* o = out->val.data() + r * c;
    double mx = in[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, in[j]);
    double sum = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (int64_t j = 0; j < c; ++j) o[j] /= sum;
  }
  if (x->needs_grad) {
    push_backward([x, out]() {
      x->ensure_grad();
      const int64_t c = x->cols;
      for (int64_t r = 0; r < x->rows; ++r) {
        const double* p = out->val.data() + r * c;
        const double* gy = out->grad.data() + r * c;
        double dot = 0.0;
        for (int64_t j = 0; j < c; ++j) dot += p[j] * gy[j];
        double* gx = x->grad.data() + r * c;
        for (int64_t j = 0; j < c; ++j) gx[j] += p[j] * (gy[j] - dot);
      }
    });
  }
  return out;
}

TensorPtr Tape::max_pool_groups(const TensorPtr& x, int64_t group_rows) {
  if (group_rows <= 0 || x->rows % group_rows != 0)
    throw std::invalid_argument("max_pool_groups: rows not divisible by group");
  track(x);
  const int64_t g = x->rows / group_rows;
  const int64_t c = x->cols;
  auto out = alloc(g, c, x->needs_grad);
  auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(g * c));
  for (int64_t b = 0; b < g; ++b) {
    const int64_t base = b * group_rows;
    for (int64_t j = 0; j < c; ++j) {
      int64_t best = base;
      double bv = x->at(base, j);
      for (int64_t r = base + 1; r < base + group_rows; ++r) {
        const double v = x->at(r, j);
        if (v > bv) {
          bv = v;
          best = r;
        }
      }
      out->at(b, j) = bv;
      (*argmax)[static_cast<size_t>(b * c + j)] = best;
    }
  }
  if (x->needs_grad) {
    push_backward([x, out, argmax]() {
      x->ensure_grad();
      const int64_t c = x->cols;
      for (int64_t i = 0; i < out->size(); ++i)
        x->grad[(*argmax)[static_cast<size_t>(i)] * c + i % c] += out->grad[i];
    });
  }
  return out;
}

TensorPtr Tape::concat_broadcast(const TensorPtr& a, const TensorPtr& b) {
  const int64_t rows = std::max(a->rows, b->rows);
  if (rows % a->rows != 0 || rows % b->rows != 0)
    throw std::invalid_argument("concat_broadcast: incompatible row counts");
  track(a);
  track(b);
  const int64_t fa = rows / a->rows;
  const int64_t fb = rows / b->rows;
  auto out = alloc(rows, a->cols + b->cols, a->needs_grad || b->needs_grad);
  for (int64_t r = 0; r < rows; ++r) {
    double* o = out->val.data() + r * out->cols;
    const double* pa = a->val.data() + (r / fa) * a->cols;
    const double* pb = b->val.data() + (r / fb) * b->cols;
    std::copy(pa, pa + a->cols, o);
    std::copy(pb, pb + b->cols, o + a->cols);
  }
  push_backward([a, b, out, fa, fb]() {
    if (a->needs_grad) {
      a->ensure_grad();
      for (int64_t r = 0; r < out->rows; ++r) {
        const double* gy = out->grad.data() + r * out->cols;
        double* ga = a->grad.data() + (r / fa) * a->cols;
        for (int64_t j = 0; j < a->cols; ++j) ga[j] += gy[j];
      }
    }
    if (b->needs_grad) {
      b->ensure_grad();
      for (int64_t r = 0; r < out->rows; ++r) {
        const double* gy = out->grad.data() + r * out->cols + a->cols;
        double* gb = b->grad.data() + (r / fb) * b->cols;
        for (int64_t j = 0; j < b->cols; ++j) gb[j] += gy[j];
      }
    }
  });
  return out;
}

TensorPtr Tape::reshape_cols(const TensorPtr& x, int64_t new_cols) {
  if (new_cols <= 0 || x->size() % new_cols != 0)
    throw std::invalid_argument("reshape_cols: size not divisible");
  track(x);
  auto out = alloc(x->size() / new_cols, new_cols, x->needs_grad);
  out->val = x->val;
  if (x->needs_grad) {
    push_backward([x, out]() {
      x->ensure_grad();
      for (int64_t i = 0; i < x->size(); ++i) x->grad[i] += out->grad[i];
    });
  }
  return out;
}

TensorPtr Tape::gather_diff(const TensorPtr& x, std::vector<int32_t> idx, int64_t group) {
  if (static_cast<int64_t>(idx.size()) != x->rows * group)
    throw std::invalid_argument("gather_diff: index count disagrees");
  track(x);
  auto out = alloc(x->rows * group, x->cols, x->needs_grad);
  const int64_t c = x->cols;
  auto ids = std::make_shared<std::vector<int32_t>>(std::move(idx));
  for (int64_t r = 0; r < x->rows; ++r) {
    for (int64_t j = 0; j < group; ++j) {
      const int64_t src = (*ids)[static_cast<size_t>(r * group + j)];
      double* o = out->val.data() + (r * group + j) * c;
      const double* pn = x->val.data() + src * c;
      const double* pc = x->val.data() + r * c;
      for (int64_t q = 0; q < c; ++q) o[q] = pn[q] - pc[q];
    }
  }
  if (x->needs_grad) {
    push_backward([x, out, ids, group]() {
      x->ensure_grad();
      const int64_t c = x->cols;
      for (int64_t r = 0; r < x->rows; ++r) {
        for (int64_t j = 0; j < group; ++j) {
          const int64_t src = (*ids)[static_cast<size_t>(r * group + j)];
          const double* gy = out->grad.data() + (r * group + j) * c;
          double* gn = x->grad.data() + src * c;
          double* gc = x->grad.data() + r * c;
          for (int64_t q = 0; q < c; ++q) {
            gn[q] += gy[q];
            gc[q] -= gy[q];
          }
        }
      }
    });
  }
  return out;
}

TensorPtr Tape::scale(const TensorPtr& x, double s) {
  track(x);
  auto out = alloc(x->rows, x->cols, x->needs_grad);
  for (int64_t i = 0; i < x->size(); ++i) out->val[i] = x->val[i] * s;
  if (x->needs_grad) {
    push_backward([x, out, s]() {
      x->ensure_grad();
      for (int64_t i = 0; i < x->size(); ++i) x->grad[i] += out->grad[i] * s;
    });
  }
  return out;
}

TensorPtr Tape::add(const TensorPtr& a, const TensorPtr& b) {
  if (a->rows != b->rows || a->cols != b->cols)
    throw std::invalid_argument("add: extents disagree");
  track(a);
  track(b);
  auto out = alloc(a->rows, a->cols, a->needs_grad || b->needs_grad);
  for (int64_t i = 0; i < a->size(); ++i) out->val[i] = a->val[i] + b->val[i];
  push_backward([a, b, out]() {
    if (a->needs_grad) {
      a->ensure_grad();
      for (int64_t i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i];
    }
    if (b->needs_grad) {
      b->ensure_grad();
      for (int64_t i = 0; i < b->size(); ++i) b->grad[i] += out->grad[i];
    }
  });
  return out;
}

TensorPtr Tape::sub(const TensorPtr& a, const TensorPtr& b) { return add(a, scale(b, -1.0)); }

TensorPtr Tape::mul(const TensorPtr& a, const TensorPtr& b) {
  if (a->rows != b->rows || a->cols != b->cols)
    throw std::invalid_argument("mul: extents disagree");
  track(a);
  track(b);
  auto out = alloc(a->rows, a->cols, a->needs_grad || b->needs_grad);
  for (int64_t i = 0; i < a->size(); ++i) out->val[i] = a->val[i] * b->val[i];
  push_backward([a, b, out]() {
    if (a->needs_grad) {
      a->ensure_grad();
      for (int64_t i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i] * b->val[i];
    }
    if (b->needs_grad) {
      b->ensure_grad();
      for (int64_t i = 0; i < b->size(); ++i) b->grad[i] += out->grad[i] * a->val[i];
    }
  });
  return out;
}

TensorPtr Tape::mean_all(const TensorPtr& x) {
  return scale(sum_all(x), 1.0 / static_cast<double>(x->size()));
}

TensorPtr Tape::sum_all(const TensorPtr& x) {
  track(x);
  auto out = alloc(1, 1, x->needs_grad);
  double s = 0.0;
  for (int64_t i = 0; i < x->size(); ++i) s += x->val[i];
  out->val[0] = s;
  if (x->needs_grad) {
    push_backward([x, out]() {
      x->ensure_grad();
      for (int64_t i = 0; i < x->size(); ++i) x->grad[i] += out->grad[0];
    });
  }
  return out;
}

TensorPtr Tape::add_rows_group(const TensorPtr& x, const Tensor& offsets, int64_t group_rows) {
  if (group_rows <= 0 || x->rows % group_rows != 0 || x->rows / group_rows != offsets.rows ||
      x->cols != offsets.cols)
    throw std::invalid_argument("add_rows_group: extents disagree");
  track(x);
  auto out = alloc(x->rows, x->cols, x->needs_grad);
  for (int64_t r = 0; r < x->rows; ++r) {
    const double* off = offsets.val.data() + (r / group_rows) * offsets.cols;
    for (int64_t j = 0; j < x->cols; ++j) out->at(r, j) = x->at(r, j) + off[j];
  }
  if (x->needs_grad) {
    push_backward([x, out]() {
      x->ensure_grad();
      for (int64_t i = 0; i < x->size(); ++i) x->grad[i] += out->grad[i];
    });
  }
  return out;
}

TensorPtr Tape::scale_rows_group(const TensorPtr& x, std::vector<double> factors,
                                 int64_t group_rows) {
  if (group_rows <= 0 || x->rows % group_rows != 0 ||
      x->rows / group_rows != static_cast<int64_t>(factors.size()))
    throw std::invalid_argument("scale_rows_group: extents disagree");
  track(x);
  auto out = alloc(x->rows, x->cols, x->needs_grad);
  auto f = std::make_shared<std::vector<double>>(std::move(factors));
  for (int64_t r = 0; r < x->rows; ++r) {
    const double s = (*f)[static_cast<size_t>(r / group_rows)];
    for (int64_t j = 0; j < x->cols; ++j) out->at(r, j) = x->at(r, j) * s;
  }
  if (x->needs_grad) {
    push_backward([x, out, f, group_rows]() {
      x->ensure_grad();
      for (int64_t r = 0; r < x->rows; ++r) {
        const double s = (*f)[static_cast<size_t>(r / group_rows)];
        for (int64_t j = 0; j < x->cols; ++j) x->grad[r * x->cols + j] += out->grad[r * x->cols + j] * s;
      }
    });
  }
  return out;
}

void Tape::backward(const TensorPtr& out) {
  if (backward_done_) throw std::logic_error("tape: backward already ran");
  if (out->size() != 1) throw std::invalid_argument("backward: output must be scalar");
  if (tracked_set_.find(out.get()) == tracked_set_.end())
    throw std::logic_error("backward: output does not belong to this tape");
  backward_done_ = true;
  for (auto& t : tracked_) t->zero_grad();
  out->grad[0] = 1.0;
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
}

}  // namespace pcc::nn
