#pragma once

#include <random>
#include <string>
#include <vector>

#include "unigs/camera.hpp"
#include "unigs/encoder.hpp"
#include "unigs/gaussians.hpp"
#include "unigs/mvdfa.hpp"
#include "unigs/params.hpp"
#include "unigs/sesa.hpp"
#include "unigs/tensor.hpp"

namespace unigs {

struct ModelConfig {
  long channels = 64;
  long layers = 2;
  long num_samples = 4;   // deformable samples per view
  double sesa_rate = 0.01;
  long n_gaussians = 512;
  long ffn_hidden = 128;
  EncoderConfig encoder;        // encoder.out_channels must match channels
  std::string init = "coarse";  // "coarse" (predicted depth) or "random"
  double init_box_half = 1.0;   // half extent of the random-init box
  bool use_mvdfa = true;        // ablation switch: image-evidence block
  bool use_sesa = true;         // ablation switch: gaussian-mixing block
};

struct ModelOutput {
  RawGaussianParams raw;  // refined unconstrained gaussians
  Tensor queries;         // [N,C] refined per-gaussian features
};

// Random starting gaussians: centers drawn uniformly from a box around the
// point the cameras converge on, kept only when every view can see them,
// with neutral opacity/scale/rotation and zero color coefficients.
RawGaussianParams init_random_in_cov(long n, const std::vector<Camera>& cams,
                                     std::mt19937_64& rng, double box_half);

// Image-conditioned gaussian reconstructor: a shared multi-view encoder, a
// starting set of gaussians, then a stack of refinement layers. Each layer
// gathers image evidence at the current centers (deformable cross
// attention), exchanges information between gaussians (subset
// self-attention), applies a feed-forward block, and emits a 23-channel
// delta (position, opacity, scale, rotation, color) from a zero-started
// head, so an untrained stack is an exact identity on the starting set.
class ReconModel {
 public:
  ReconModel(ParamStore& ps, const ModelConfig& cfg, std::mt19937_64& rng);

  // images [I,3,H,W] in [0,1], cams parallel to views. The rng only feeds
  // the "random" init mode; "coarse" is fully deterministic.
  ModelOutput forward(const Tensor& images, const std::vector<Camera>& cams,
                      std::mt19937_64& rng) const;

  // bytes held by the per-gaussian query buffer in one forward pass;
  // depends on the gaussian budget, never on the view count
  long query_buffer_bytes() const {
    return cfg_.n_gaussians * cfg_.channels * static_cast<long>(sizeof(double));
  }

  const ModelConfig& config() const { return cfg_; }
  const Encoder& encoder() const { return *enc_; }

 private:
  struct Layer {
    std::unique_ptr<MVDFA> mvdfa;
    std::unique_ptr<SESA> sesa;
    Tensor ln1_g, ln1_b, ln2_g, ln2_b;
    Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    Tensor head_w, head_b;
  };

  std::pair<RawGaussianParams, Tensor> coarse_init(
      const std::vector<Tensor>& feats, const std::vector<Camera>& cams) const;

  ModelConfig cfg_;
  std::unique_ptr<Encoder> enc_;
  Tensor depth_w_, depth_b_;
  std::vector<Layer> layers_;
};

}  // namespace unigs
