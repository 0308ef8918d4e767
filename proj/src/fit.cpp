#include "unigs/fit.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "unigs/adam.hpp"
#include "unigs/common.hpp"
#include "unigs/decoder.hpp"
#include "unigs/ops.hpp"
#include "unigs/png_io.hpp"
#include "unigs/renderer.hpp"

namespace fs = std::filesystem;

namespace unigs {
namespace {

struct EvalView {
  Camera cam;
  Tensor target;  // [3,H,W], pre-multiplied by the mask
  Tensor mask;    // [3,H,W] broadcast-ready, undefined when all-foreground
};

EvalView make_eval_view(const Scene& scene, long idx) {
  EvalView v;
  v.cam = scene.views[static_cast<size_t>(idx)].cam;
  ViewData d = load_view(scene, idx);
  bool trivial = true;
  for (double m : d.mask.data())
    if (m != 1.0) {
      trivial = false;
      break;
    }
  v.target = d.image;
  if (!trivial) {
    v.mask = d.mask;  // [1,H,W] broadcasts over channels
    NoGradScope ng;
    v.target = ops::mul(v.target, v.mask);
  }
  return v;
}

Tensor masked_pred(const Tensor& pred, const EvalView& v) {
  return v.mask.defined() ? ops::mul(pred, v.mask) : pred;
}

double mean_psnr(const GaussianSet& set, const std::vector<EvalView>& views) {
  double acc = 0;
  for (const EvalView& v : views)
    acc += psnr(masked_pred(render_gaussians(set, v.cam), v), v.target);
  return acc / static_cast<double>(views.size());
}

double mean_ssim(const GaussianSet& set, const std::vector<EvalView>& views) {
  double acc = 0;
  for (const EvalView& v : views)
    acc += ssim(masked_pred(render_gaussians(set, v.cam), v), v.target);
  return acc / static_cast<double>(views.size());
}

double mean_loss(const GaussianSet& set, const std::vector<EvalView>& views,
                 const LossConfig& lc) {
  double acc = 0;
  for (const EvalView& v : views)
    acc +=
        total_loss(masked_pred(render_gaussians(set, v.cam), v), v.target, lc)
            .item();
  return acc / static_cast<double>(views.size());
}

}  // namespace

FitResult fit_scene(const Scene& scene, const FitConfig& cfg) {
  require(cfg.iters >= 0, "fit: negative iteration count");
  require(cfg.lr > 0, "fit: learning rate must be positive");
  require(cfg.n_gaussians > 0, "fit: need at least one gaussian");

  std::vector<EvalView> train_views, held_views;
  for (long i : scene.input_indices())
    train_views.push_back(make_eval_view(scene, i));
  for (long i : scene.heldout_indices())
    held_views.push_back(make_eval_view(scene, i));
  require(!train_views.empty(), "fit: scene has no input views");

  std::vector<Camera> cams;
  for (const EvalView& v : train_views) cams.push_back(v.cam);

  double box_half = cfg.init_box_half;
  if (box_half <= 0) {
    const Vec3 center = scene_center(cams);
    double acc = 0;
    for (const Camera& c : cams) acc += (c.center() - center).norm();
    box_half = 0.35 * acc / static_cast<double>(cams.size());
  }

  std::mt19937_64 rng(mix_seed(cfg.seed, 0xf17));
  FitResult result;
  result.raw = init_random_in_cov(cfg.n_gaussians, cams, rng, box_half);
  result.raw.set_requires_grad(true);
  std::vector<Tensor> params = result.raw.tensors();
  Adam adam(params, {cfg.lr});

  const auto evaluate = [&](long step) {
    NoGradScope ng;
    GaussianSet set = activate_params(result.raw);
    FitEvalRow row;
    row.step = step;
    row.loss = mean_loss(set, train_views, cfg.loss);
    row.train_psnr = mean_psnr(set, train_views);
    if (!held_views.empty()) {
      row.heldout_psnr = mean_psnr(set, held_views);
      row.heldout_ssim = mean_ssim(set, held_views);
    }
    result.history.push_back(row);
    if (cfg.log)
      (*cfg.log) << "fit step " << step << " loss " << row.loss
                 << " train_psnr " << row.train_psnr << " heldout_psnr "
                 << row.heldout_psnr << "\n";
  };

  evaluate(0);
  for (long t = 0; t < cfg.iters; ++t) {
    const double frac =
        cfg.iters > 1 ? static_cast<double>(t) / static_cast<double>(cfg.iters - 1)
                      : 0.0;
    adam.set_lr(cfg.lr * std::pow(cfg.lr_decay, frac));
    for (Tensor& p : params) p.zero_grad();

    const EvalView& view =
        train_views[static_cast<size_t>(t) % train_views.size()];
    Tape tape;
    TapeScope scope(tape);
    GaussianSet set = activate_params(result.raw);
    Tensor pred = masked_pred(render_gaussians(set, view.cam), view);
    Tensor loss = total_loss(pred, view.target, cfg.loss);
    if (!std::isfinite(loss.item()))
      throw ContractError("fit: non-finite loss at step " + std::to_string(t));
    tape.backward(loss);
    if (cfg.clip_norm > 0) clip_grad_norm(params, cfg.clip_norm);
    adam.step();

    if (cfg.eval_every > 0 && (t + 1) % cfg.eval_every == 0 &&
        t + 1 != cfg.iters)
      evaluate(t + 1);
  }
  if (cfg.iters > 0) evaluate(cfg.iters);

  const FitEvalRow& final_row = result.history.back();
  result.train_psnr = final_row.train_psnr;
  result.heldout_psnr = final_row.heldout_psnr;
  result.heldout_ssim = final_row.heldout_ssim;

  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    save_ply((fs::path(cfg.out_dir) / "fitted.ply").string(), result.raw);
    std::ofstream csv(fs::path(cfg.out_dir) / "metrics.csv");
    csv << "step,loss,train_psnr,heldout_psnr,heldout_ssim\n";
    for (const FitEvalRow& r : result.history)
      csv << r.step << "," << r.loss << "," << r.train_psnr << ","
          << r.heldout_psnr << "," << r.heldout_ssim << "\n";
    fs::create_directories(fs::path(cfg.out_dir) / "renders");
    NoGradScope ng;
    GaussianSet set = activate_params(result.raw);
    for (size_t i = 0; i < scene.views.size(); ++i) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "%03zu.png", i);
      save_png((fs::path(cfg.out_dir) / "renders" / buf).string(),
               render_gaussians(set, scene.views[i].cam));
    }
  }
  return result;
}

}  // namespace unigs
