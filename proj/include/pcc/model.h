#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pcc/network.h"

namespace pcc {

// Widths of the three codec networks. k is the reconstructed patch size; the
// defaults follow the parameter set the standard() factory encodes. Tests may
// shrink everything through explicit widths.
struct ModelDims {
  int d = 16;
  int L = 7;
  int k = 0;
  int sapp_group = 16;
  std::vector<int> enc_sapp;   // per-neighbourhood chain, input width 3
  std::vector<int> enc_pn;     // shared chain after [coords | sapp] concat
  std::vector<int> dec_mlp;    // latent expansion, ends at k * dec_feature
  std::vector<int> dec_smlp;   // per-point chain after [latent | feature] concat
  std::vector<int> ctx_pn;     // centroid chain before the global pool
  std::vector<int> ctx_smlp;   // per-centroid chain after [coords | global] concat

  static ModelDims standard(int k);
  static ModelDims tiny(int d, int L, int k);
  void validate() const;  // throws FormatError on inconsistent widths
  int dec_feature() const { return dec_mlp.back() / k; }
};

// Quantizer: maps the latent through a sigmoid onto [0,L) and floors into one
// of L uniform bins. The backward pass runs through sigmoid(y)*L.
uint8_t quantize_code(double y, int L);
double ste_gradient(double y, int L);
// Decoder-side input for a code: the bin center on the sigmoid(y)*L scale.
inline double dequantize_code(uint8_t code) { return code + 0.5; }

// Patch autoencoder plus centroid-conditioned entropy model. Forward passes
// are batched: m patches travel as one (m*K,3) block of rows.
class CodecModel {
 public:
  CodecModel(ModelDims dims, uint64_t seed);

  const ModelDims& dims() const { return dims_; }

  // (m*K,3) patches -> (m,d) latents.
  nn::TensorPtr encode(nn::Tape& tape, const nn::TensorPtr& patches, int64_t m) const;
  // (m,d) pre-quantization latents -> (m,d) bin centers; codes row-major.
  nn::TensorPtr ste_quantize(nn::Tape& tape, const nn::TensorPtr& latents,
                             std::vector<uint8_t>* codes) const;
  // (m,d) latents -> (m*k,3) relative points.
  nn::TensorPtr decode(nn::Tape& tape, const nn::TensorPtr& latents, int64_t m) const;
  // (m,3) decoded centroids -> (m*d, L) pmfs, rows summing to 1.
  nn::TensorPtr context_pmfs(nn::Tape& tape, const nn::TensorPtr& centroids, int64_t m) const;

  // Σ -log2 max(pmf[row][code], prob_floor), in bits, differentiable in pmfs.
  nn::TensorPtr rate_bits(nn::Tape& tape, const nn::TensorPtr& pmfs,
                          std::vector<uint8_t> codes, double prob_floor = 1e-12) const;

  // Inference paths (no tape kept, values only).
  nn::Tensor eval_encode(const nn::Tensor& patches, int64_t m) const;
  nn::Tensor eval_decode(const nn::Tensor& latents, int64_t m) const;
  nn::Tensor eval_context_pmfs(const nn::Tensor& centroids, int64_t m) const;

  std::vector<nn::TensorPtr> params() const;
  void set_requires_grad(bool on);
  void save(const std::string& path) const;
  void load(const std::string& path);

  const nn::Network& encoder() const { return encoder_; }
  const nn::Network& decoder() const { return decoder_; }
  const nn::Network& context() const { return context_; }

 private:
  ModelDims dims_;
  nn::Network encoder_;
  nn::Network decoder_;
  nn::Network context_;
};

// Eq-style bit rate in bits per input point over n points.
double estimate_rate_bpp(std::span<const double> pmfs, std::span<const uint8_t> codes, size_t L,
                         size_t n, double prob_floor = 1e-12);

}  // namespace pcc
