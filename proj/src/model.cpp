#include "pcc/model.h"

#include <cmath>
#include <random>

#include "pcc/common.h"

namespace pcc {

using nn::LayerSpec;
using nn::Tape;
using nn::TensorPtr;

namespace {
constexpr double kInvLn2 = 1.4426950408889634;
}

ModelDims ModelDims::standard(int k) {
  ModelDims m;
  m.k = k;
  m.enc_sapp = {3, 32, 64, 128};
  m.enc_pn = {3 + 128, 128, 256, 512, m.d};
  m.dec_mlp = {m.d, 256, 1024, k * 128};
  m.dec_smlp = {m.d + 128, 128, 64, 32, 3};
  m.ctx_pn = {3, 64, 128, 256};
  m.ctx_smlp = {3 + 256, 256, 512, m.d * m.L};
  m.validate();
  return m;
}

ModelDims ModelDims::tiny(int d, int L, int k) {
  ModelDims m;
  m.d = d;
  m.L = L;
  m.k = k;
  m.sapp_group = 4;
  m.enc_sapp = {3, 8, 16};
  m.enc_pn = {3 + 16, 16, d};
  m.dec_mlp = {d, 16, k * 8};
  m.dec_smlp = {d + 8, 16, 3};
  m.ctx_pn = {3, 8, 16};
  m.ctx_smlp = {3 + 16, 16, d * L};
  m.validate();
  return m;
}

void ModelDims::validate() const {
  auto fail = [](const char* what) { throw FormatError(std::string("model dims: ") + what); };
  if (d < 1 || L < 2 || k < 1 || sapp_group < 1) fail("bad scalar field");
  if (enc_sapp.empty() || enc_sapp.front() != 3) fail("encoder SAPP must consume coordinates");
  if (enc_pn.empty() || enc_pn.front() != 3 + enc_sapp.back()) fail("encoder concat width");
  if (enc_pn.back() != d) fail("encoder output width must be d");
  if (dec_mlp.empty() || dec_mlp.front() != d) fail("decoder input width must be d");
  if (dec_mlp.back() % k != 0) fail("decoder expansion must split into k rows");
  if (dec_smlp.empty() || dec_smlp.front() != d + dec_mlp.back() / k) fail("decoder concat width");
  if (dec_smlp.back() != 3) fail("decoder must emit coordinates");
  if (ctx_pn.empty() || ctx_pn.front() != 3) fail("context model consumes centroids");
  if (ctx_smlp.empty() || ctx_smlp.front() != 3 + ctx_pn.back()) fail("context concat width");
  if (ctx_smlp.back() != d * L) fail("context output width must be d*L");
}

uint8_t quantize_code(double y, int L) {
  const double s = 1.0 / (1.0 + std::exp(-y));
  const int code = static_cast<int>(std::floor(s * L));
  return static_cast<uint8_t>(std::min(code, L - 1));
}

double ste_gradient(double y, int L) {
  const double s = 1.0 / (1.0 + std::exp(-y));
  return L * s * (1.0 - s);
}

namespace {

std::vector<LayerSpec> encoder_spec(const ModelDims& m) {
  return {LayerSpec::sapp(m.sapp_group, m.enc_sapp), LayerSpec::concat_input(),
          LayerSpec::smlp(m.enc_pn, /*activate_output=*/false), LayerSpec::pool()};
}

std::vector<LayerSpec> decoder_spec(const ModelDims& m) {
  return {LayerSpec::mlp(m.dec_mlp), LayerSpec::reshape(m.dec_feature()),
          LayerSpec::concat_input(), LayerSpec::smlp(m.dec_smlp, /*activate_output=*/false)};
}

std::vector<LayerSpec> context_spec(const ModelDims& m) {
  return {LayerSpec::smlp(m.ctx_pn), LayerSpec::pool(), LayerSpec::concat_input(),
          LayerSpec::smlp(m.ctx_smlp, /*activate_output=*/false), LayerSpec::reshape(m.L),
          LayerSpec::softmax_last()};
}

uint64_t subseed(uint64_t seed, uint64_t lane) {
  std::mt19937_64 rng(seed);
  uint64_t s = 0;
  for (uint64_t i = 0; i <= lane; ++i) s = rng();
  return s;
}

}  // namespace

CodecModel::CodecModel(ModelDims dims, uint64_t seed)
    : dims_((dims.validate(), std::move(dims))),
      encoder_(encoder_spec(dims_), subseed(seed, 0)),
      decoder_(decoder_spec(dims_), subseed(seed, 1)),
      context_(context_spec(dims_), subseed(seed, 2)) {}

TensorPtr CodecModel::encode(Tape& tape, const TensorPtr& patches, int64_t m) const {
  return encoder_.forward(tape, patches, m);
}

TensorPtr CodecModel::ste_quantize(Tape& tape, const TensorPtr& latents,
                                   std::vector<uint8_t>* codes) const {
  tape.track(latents);
  const int L = dims_.L;
  auto out = tape.alloc(latents->rows, latents->cols, latents->needs_grad);
  auto sig = std::make_shared<std::vector<double>>(static_cast<size_t>(latents->size()));
  if (codes) codes->resize(static_cast<size_t>(latents->size()));
  for (int64_t i = 0; i < latents->size(); ++i) {
    const double s = 1.0 / (1.0 + std::exp(-latents->val[i]));
    (*sig)[static_cast<size_t>(i)] = s;
    const int code = std::min(static_cast<int>(std::floor(s * L)), L - 1);
    if (codes) (*codes)[static_cast<size_t>(i)] = static_cast<uint8_t>(code);
    out->val[i] = dequantize_code(static_cast<uint8_t>(code));
  }
  if (latents->needs_grad) {
    auto src = latents;
    tape.push_backward([src, out, sig, L]() {
      src->ensure_grad();
      for (int64_t i = 0; i < src->size(); ++i) {
        const double s = (*sig)[static_cast<size_t>(i)];
        src->grad[i] += out->grad[i] * L * s * (1.0 - s);
      }
    });
  }
  return out;
}

TensorPtr CodecModel::decode(Tape& tape, const TensorPtr& latents, int64_t m) const {
  return decoder_.forward(tape, latents, m);
}

TensorPtr CodecModel::context_pmfs(Tape& tape, const TensorPtr& centroids, int64_t) const {
  return context_.forward(tape, centroids, /*groups=*/1);
}

TensorPtr CodecModel::rate_bits(Tape& tape, const TensorPtr& pmfs, std::vector<uint8_t> codes,
                                double prob_floor) const {
  if (pmfs->rows != static_cast<int64_t>(codes.size()))
    throw std::invalid_argument("rate_bits: one code per pmf row required");
  tape.track(pmfs);
  auto out = tape.alloc(1, 1, pmfs->needs_grad);
  auto cd = std::make_shared<std::vector<uint8_t>>(std::move(codes));
  const int64_t L = pmfs->cols;
  double bits = 0.0;
  for (int64_t r = 0; r < pmfs->rows; ++r) {
    const double p = std::max(pmfs->val[r * L + (*cd)[static_cast<size_t>(r)]], prob_floor);
    bits -= std::log2(p);
  }
  out->val[0] = bits;
  if (pmfs->needs_grad) {
    tape.push_backward([pmfs, out, cd, L, prob_floor]() {
      pmfs->ensure_grad();
      for (int64_t r = 0; r < pmfs->rows; ++r) {
        const int64_t at = r * L + (*cd)[static_cast<size_t>(r)];
        if (pmfs->val[at] > prob_floor)
          pmfs->grad[at] -= out->grad[0] * kInvLn2 / pmfs->val[at];
      }
    });
  }
  return out;
}

nn::Tensor CodecModel::eval_encode(const nn::Tensor& patches, int64_t m) const {
  return encoder_.eval(patches, m);
}

nn::Tensor CodecModel::eval_decode(const nn::Tensor& latents, int64_t m) const {
  return decoder_.eval(latents, m);
}

nn::Tensor CodecModel::eval_context_pmfs(const nn::Tensor& centroids, int64_t) const {
  return context_.eval(centroids, 1);
}

std::vector<TensorPtr> CodecModel::params() const {
  std::vector<TensorPtr> all = encoder_.params();
  const auto& d = decoder_.params();
  const auto& c = context_.params();
  all.insert(all.end(), d.begin(), d.end());
  all.insert(all.end(), c.begin(), c.end());
  return all;
}

void CodecModel::set_requires_grad(bool on) {
  encoder_.set_requires_grad(on);
  decoder_.set_requires_grad(on);
  context_.set_requires_grad(on);
}

void CodecModel::save(const std::string& path) const { nn::save_weights(path, params()); }
void CodecModel::load(const std::string& path) { nn::load_weights(path, params()); }

double estimate_rate_bpp(std::span<const double> pmfs, std::span<const uint8_t> codes, size_t L,
                         size_t n, double prob_floor) {
  if (pmfs.size() != codes.size() * L)
    throw std::invalid_argument("estimate_rate_bpp: extents disagree");
  double bits = 0.0;
  for (size_t i = 0; i < codes.size(); ++i)
    bits -= std::log2(std::max(pmfs[i * L + codes[i]], prob_floor));
  return bits / static_cast<double>(n);
}

}  // namespace pcc
