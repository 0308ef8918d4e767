#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "unigs/decoder.hpp"
#include "unigs/losses.hpp"
#include "unigs/scene.hpp"

namespace unigs {

struct TrainConfig {
  ModelConfig model;
  long steps = 3000;
  double lr = 1e-4;
  unsigned long seed = 1;
  double clip_norm = 1.0;
  long eval_every = 250;  // 0: evaluate only at start and end
  long ckpt_every = 0;    // 0: final checkpoint only
  LossConfig loss;
  std::string ckpt_path;  // default out_dir/ckpt.bin
  std::string resume;     // checkpoint to continue from
  std::string out_dir;    // when set: metrics.csv + checkpoints
  std::ostream* log = nullptr;
};

struct TrainEvalRow {
  long step = 0;
  double loss = 0;
  double train_psnr = 0;
  double heldout_psnr = 0;
};

struct TrainResult {
  std::vector<TrainEvalRow> history;  // first row: untrained model
  double psnr_init = 0;               // train-view PSNR before any update
  double psnr_final = 0;
  double heldout_final = 0;
  long steps_run = 0;
};

// Overfits the reconstruction model on a small scene set, one scene per
// step round-robin, per-step seeding derived from (seed, step) so a resumed
// run draws the same stream. Saving a checkpoint immediately re-imports it,
// so the live state equals what a resume would load and continuation is
// bit-exact. Throws on a non-finite loss, naming the step.
TrainResult train_tiny(const std::vector<Scene>& scenes,
                       const TrainConfig& cfg);

}  // namespace unigs
