#include "pcc/network.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "pcc/common.h"

namespace pcc::nn {

void init_affine(Tensor& w, Tensor& b, std::mt19937_64& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(w.rows));
  for (auto& v : w.val) v = (2.0 * unit_double(rng) - 1.0) * bound;
  for (auto& v : b.val) v = (2.0 * unit_double(rng) - 1.0) * bound;
}

Network::Network(std::vector<LayerSpec> spec, uint64_t seed) : spec_(std::move(spec)) {
  std::mt19937_64 rng(seed);
  for (const auto& s : spec_) {
    const int first = static_cast<int>(params_.size());
    if (s.kind == LayerKind::kSmlp || s.kind == LayerKind::kMlp || s.kind == LayerKind::kSapp) {
      if (s.widths.size() < 2) throw std::invalid_argument("layer chain needs at least 2 widths");
      for (size_t i = 0; i + 1 < s.widths.size(); ++i) {
        if (s.widths[i] <= 0 || s.widths[i + 1] <= 0)
          throw std::invalid_argument("layer widths must be positive");
        auto w = make_tensor(s.widths[i], s.widths[i + 1], true);
        auto b = make_tensor(1, s.widths[i + 1], true);
        init_affine(*w, *b, rng);
        params_.push_back(std::move(w));
        params_.push_back(std::move(b));
      }
      if (s.kind == LayerKind::kSapp && s.group_size < 1)
        throw std::invalid_argument("SAPP group size must be >= 1");
    }
    chains_.emplace_back(first, static_cast<int>(params_.size()) - first);
  }
}

void Network::set_requires_grad(bool on) {
  for (auto& p : params_) p->needs_grad = on;
}

namespace {

// Exact in-patch k-nearest-neighbour indices (global rows), ties to the
// lowest index. Patches are small enough that brute force beats a tree here.
std::vector<int32_t> patch_neighbors(const Tensor& pts, int64_t groups, int group_size) {
  const int64_t per = pts.rows / groups;
  const int64_t g = std::min<int64_t>(group_size, per);
  std::vector<int32_t> idx(static_cast<size_t>(pts.rows * g));
  std::vector<std::pair<double, int32_t>> cand(static_cast<size_t>(per));
  for (int64_t b = 0; b < groups; ++b) {
    const int64_t base = b * per;
    for (int64_t p = 0; p < per; ++p) {
      const double* q = pts.val.data() + (base + p) * 3;
      for (int64_t r = 0; r < per; ++r) {
        const double* s = pts.val.data() + (base + r) * 3;
        const double dx = s[0] - q[0], dy = s[1] - q[1], dz = s[2] - q[2];
        cand[static_cast<size_t>(r)] = {dx * dx + dy * dy + dz * dz,
                                        static_cast<int32_t>(base + r)};
      }
      std::partial_sort(cand.begin(), cand.begin() + g, cand.end());
      for (int64_t j = 0; j < g; ++j)
        idx[static_cast<size_t>((base + p) * g + j)] = cand[static_cast<size_t>(j)].second;
    }
  }
  return idx;
}

[[noreturn]] void shape_fail(size_t layer_index, int64_t got, int expected) {
  char msg[128];
  std::snprintf(msg, sizeof msg, "layer %zu: input width %lld, expected %d", layer_index,
                static_cast<long long>(got), expected);
  throw std::invalid_argument(msg);
}

}  // namespace

TensorPtr Network::forward(Tape& tape, const TensorPtr& input, int64_t groups) const {
  if (groups <= 0 || input->rows % groups != 0)
    throw std::invalid_argument("forward: rows not divisible by groups");
  TensorPtr cur = input;
  tape.leaf(input);
  for (size_t si = 0; si < spec_.size(); ++si) {
    const LayerSpec& s = spec_[si];
    const auto [first, count] = chains_[si];
    switch (s.kind) {
      case LayerKind::kSmlp:
      case LayerKind::kMlp: {
        if (cur->cols != s.widths[0]) shape_fail(si, cur->cols, s.widths[0]);
        if (s.kind == LayerKind::kMlp && cur->rows != groups)
          throw std::invalid_argument("MLP expects one row per group");
        for (int l = 0; l < count / 2; ++l) {
          cur = tape.linear(cur, params_[first + 2 * l], params_[first + 2 * l + 1]);
          if (l + 1 < count / 2 || s.activate_output) cur = tape.relu(cur);
        }
        break;
      }
      case LayerKind::kSapp: {
        if (cur->cols != s.widths[0]) shape_fail(si, cur->cols, s.widths[0]);
        const int64_t per = cur->rows / groups;
        const int64_t g = std::min<int64_t>(s.group_size, per);
        auto idx = patch_neighbors(*cur, groups, s.group_size);
        TensorPtr feat = tape.gather_diff(cur, std::move(idx), g);
        for (int l = 0; l < count / 2; ++l) {
          feat = tape.linear(feat, params_[first + 2 * l], params_[first + 2 * l + 1]);
          if (l + 1 < count / 2 || s.activate_output) feat = tape.relu(feat);
        }
        cur = tape.max_pool_groups(feat, g);
        break;
      }
      case LayerKind::kPointnetPool:
        cur = tape.max_pool_groups(cur, cur->rows / groups);
        break;
      case LayerKind::kSigmoid:
        cur = tape.sigmoid(cur);
        break;
      case LayerKind::kSoftmaxLast:
        cur = tape.softmax_rows(cur);
        break;
      case LayerKind::kReshape:
        cur = tape.reshape_cols(cur, s.reshape_cols);
        break;
      case LayerKind::kConcatBroadcast:
        cur = tape.concat_broadcast(input, cur);
        break;
    }
  }
  return cur;
}

Tensor Network::eval(const Tensor& input, int64_t groups) const {
  Tape tape;
  auto in = std::make_shared<Tensor>(input);
  in->needs_grad = false;
  return *forward(tape, in, groups);
}

GradCheckReport grad_check(Network& net, const Tensor& input, int64_t groups, double fd_step,
                           int max_checks, uint64_t seed) {
  auto in = std::make_shared<Tensor>(input);
  in->needs_grad = true;
  net.set_requires_grad(true);

  // Scalarize through a fixed random weighting so structurally constant sums
  // (softmax rows) still exercise the gradient.
  std::vector<double> weights;
  auto weigh = [&](const Tensor& out) {
    if (weights.empty()) {
      std::mt19937_64 wrng(seed ^ 0x5bd1e995u);
      weights.resize(static_cast<size_t>(out.size()));
      for (auto& w : weights) w = 0.5 + unit_double(wrng);
    }
    double s = 0.0;
    for (int64_t i = 0; i < out.size(); ++i) s += weights[static_cast<size_t>(i)] * out.val[i];
    return s;
  };

  Tape tape;
  auto raw = net.forward(tape, in, groups);
  auto wt = tape.alloc(raw->rows, raw->cols, false);
  weigh(*raw);  // populate weights with the final extents
  wt->val = weights;
  auto loss = tape.sum_all(tape.mul(raw, wt));
  tape.backward(loss);

  std::vector<TensorPtr> targets = net.params();
  targets.push_back(in);
  int64_t total = 0;
  for (const auto& t : targets) total += t->size();

  auto eval_sum = [&]() { return weigh(net.eval(*in, groups)); };

  std::mt19937_64 rng(seed);
  GradCheckReport report;
  const int checks = static_cast<int>(std::min<int64_t>(max_checks, total));
  for (int c = 0; c < checks; ++c) {
    int64_t flat = static_cast<int64_t>(next_below(rng, static_cast<uint64_t>(total)));
    size_t ti = 0;
    while (flat >= targets[ti]->size()) flat -= targets[ti++]->size();
    Tensor& t = *targets[ti];
    const double keep = t.val[flat];
    t.val[flat] = keep + fd_step;
    const double up = eval_sum();
    t.val[flat] = keep - fd_step;
    const double dn = eval_sum();
    t.val[flat] = keep;
    const double fd = (up - dn) / (2.0 * fd_step);
    const double an = t.grad[flat];
    const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
    report.max_rel_err = std::max(report.max_rel_err, rel);
    ++report.checked;
  }
  return report;
}

// --- weight file ------------------------------------------------------------

static constexpr char kWeightMagic[4] = {'I', 'P', 'D', 'W'};

void save_weights(const std::string& path, const std::vector<TensorPtr>& tensors) {
  std::vector<uint8_t> buf;
  buf.insert(buf.end(), kWeightMagic, kWeightMagic + 4);
  put_u8(buf, 1);
  put_u32(buf, static_cast<uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t->rows == 1) {
      put_u8(buf, 1);
      put_u32(buf, static_cast<uint32_t>(t->cols));
    } else {
      put_u8(buf, 2);
      put_u32(buf, static_cast<uint32_t>(t->rows));
      put_u32(buf, static_cast<uint32_t>(t->cols));
    }
    for (double v : t->val) put_f32(buf, static_cast<float>(v));
  }
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw FormatError("cannot open weight file for writing: " + path);
  const size_t written = std::fwrite(buf.data(), 1, buf.size(), f);
  std::fclose(f);
  if (written != buf.size()) throw FormatError("short write to weight file: " + path);
}

void load_weights(const std::string& path, const std::vector<TensorPtr>& tensors) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw FormatError("cannot open weight file: " + path);
  std::vector<uint8_t> buf;
  uint8_t chunk[65536];
  size_t got;
  while ((got = std::fread(chunk, 1, sizeof chunk, f)) > 0) buf.insert(buf.end(), chunk, chunk + got);
  std::fclose(f);

  try {
    ByteReader r(buf.data(), buf.size());
    const uint8_t* magic = r.bytes(4);
    if (std::memcmp(magic, kWeightMagic, 4) != 0) throw FormatError("not a weight file: " + path);
    if (r.u8() != 1) throw FormatError("unsupported weight file version");
    const uint32_t count = r.u32();
    if (count != tensors.size())
      throw FormatError("weight file holds " + std::to_string(count) + " tensors, expected " +
                        std::to_string(tensors.size()));
    for (const auto& t : tensors) {
      const uint8_t rank = r.u8();
      int64_t rows, cols;
      if (rank == 1) {
        rows = 1;
        cols = r.u32();
      } else if (rank == 2) {
        rows = r.u32();
        cols = r.u32();
      } else {
        throw FormatError("unsupported tensor rank in weight file");
      }
      if (rows != t->rows || cols != t->cols)
        throw FormatError("weight tensor extents disagree with the model");
      for (auto& v : t->val) v = static_cast<double>(r.f32());
    }
    if (r.remaining() != 0) throw FormatError("trailing bytes in weight file");
  } catch (const StreamError&) {
    throw FormatError("truncated weight file: " + path);
  }
}

}  // namespace pcc::nn
