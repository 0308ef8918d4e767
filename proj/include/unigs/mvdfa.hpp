#pragma once

#include <random>
#include <string>
#include <vector>

#include "unigs/camera.hpp"
#include "unigs/params.hpp"
#include "unigs/tensor.hpp"

namespace unigs {

struct MVDFAConfig {
  long channels = 64;
  long num_samples = 4;         // sampling points per view
  double offset_radius = 0.05;  // initial sampling ring, normalized coords
};

// Deformable cross-attention from per-gaussian queries into view feature
// maps. Each view modulates the normalized queries with a pose-derived
// scale/shift, predicts sampling offsets around the projected center,
// pools bilinear samples with softmax weights, and the per-view updates
// are combined through sigmoid gates.
//
// Two contracts the callers rely on:
//  - all-zero feature maps produce an exactly zero update (the value
//    projection carries no bias), so residual layers start as identities;
//  - the fused update is bit-identical under any reordering of the views
//    (gated updates are summed in a canonical order).
class MVDFA {
 public:
  MVDFA(ParamStore& ps, const std::string& prefix, const MVDFAConfig& cfg,
        std::mt19937_64& rng);

  // queries [N,C], centers [N,3] world positions, feats one [C,Hf,Wf] per
  // view (image-aligned, sampled with corner-pinned normalized coords),
  // cams parallel to feats.
  Tensor forward(const Tensor& queries, const Tensor& centers,
                 const std::vector<Tensor>& feats,
                 const std::vector<Camera>& cams) const;

  // Pose-conditioned query modulation for one view: ln(Q)*(1+s)+t.
  Tensor modulated_queries(const Tensor& queries, const Camera& cam) const;

  // Per-view softmax sampling weights [N,Ns] captured by the last forward.
  const std::vector<Tensor>& last_scores() const { return last_scores_; }

  const MVDFAConfig& config() const { return cfg_; }

 private:
  MVDFAConfig cfg_;
  Tensor ln_g_, ln_b_;
  Tensor cam_w1_, cam_b1_, cam_w2_, cam_b2_;
  Tensor off_w_, off_b_;
  Tensor score_w_, score_b_;
  Tensor value_w_;  // bias-free on purpose, see the zero-update contract
  Tensor fuse_w_, fuse_b_;
  mutable std::vector<Tensor> last_scores_;
};

}  // namespace unigs
