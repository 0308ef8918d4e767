#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "unigs/gaussians.hpp"
#include "unigs/losses.hpp"
#include "unigs/scene.hpp"

namespace unigs {

struct FitConfig {
  long n_gaussians = 2000;
  long iters = 1500;
  double lr = 1e-4;
  double lr_decay = 1.0;  // lr multiplier reached at the final step
  unsigned long seed = 1;
  long eval_every = 0;  // 0: metrics at start and end only
  double clip_norm = 0.0;
  double init_box_half = 0.0;  // 0: derived from the camera distances
  LossConfig loss;
  std::string out_dir;  // when set: fitted.ply, renders/, metrics.csv
  std::ostream* log = nullptr;
};

struct FitEvalRow {
  long step = 0;
  double loss = 0;
  double train_psnr = 0;
  double heldout_psnr = 0;
  double heldout_ssim = 0;
};

struct FitResult {
  RawGaussianParams raw;
  std::vector<FitEvalRow> history;  // first row is the raw initialization
  double train_psnr = 0;
  double heldout_psnr = 0;
  double heldout_ssim = 0;
};

// Optimizes one splat set directly against the scene's input views,
// cycling through them one per step. Held-out views are never trained on,
// only measured. Throws on a non-finite loss, naming the step.
FitResult fit_scene(const Scene& scene, const FitConfig& cfg);

}  // namespace unigs
