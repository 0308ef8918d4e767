#include "unigs/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "unigs/adam.hpp"
#include "unigs/checkpoint.hpp"
#include "unigs/common.hpp"
#include "unigs/ops.hpp"
#include "unigs/renderer.hpp"

namespace fs = std::filesystem;

namespace unigs {
namespace {

struct SceneData {
  Tensor images;                   // [I,3,H,W] input views stacked
  std::vector<Camera> cams;        // input cameras
  std::vector<Tensor> targets;     // per input view [3,H,W]
  std::vector<Camera> held_cams;
  std::vector<Tensor> held_targets;
};

SceneData load_scene_data(const Scene& scene) {
  SceneData d;
  std::vector<Tensor> stack;
  for (long i : scene.input_indices()) {
    ViewData v = load_view(scene, i);
    d.cams.push_back(scene.views[static_cast<size_t>(i)].cam);
    d.targets.push_back(v.image);
    stack.push_back(ops::reshape(
        v.image, {1, v.image.dim(0), v.image.dim(1), v.image.dim(2)}));
  }
  require(!stack.empty(), "train: scene has no input views");
  {
    NoGradScope ng;
    d.images = stack.size() == 1 ? stack[0] : ops::concat(stack, 0);
  }
  for (long i : scene.heldout_indices()) {
    ViewData v = load_view(scene, i);
    d.held_cams.push_back(scene.views[static_cast<size_t>(i)].cam);
    d.held_targets.push_back(v.image);
  }
  return d;
}

}  // namespace

TrainResult train_tiny(const std::vector<Scene>& scenes,
                       const TrainConfig& cfg) {
  require(!scenes.empty(), "train: need at least one scene");
  require(cfg.steps >= 0, "train: negative step count");
  require(cfg.lr > 0, "train: learning rate must be positive");

  std::vector<SceneData> data;
  for (const Scene& s : scenes) data.push_back(load_scene_data(s));

  ParamStore ps;
  std::mt19937_64 init_rng(mix_seed(cfg.seed, 0x11d));
  ReconModel model(ps, cfg.model, init_rng);
  std::vector<Tensor> params = ps.all();
  Adam adam(params, {cfg.lr});

  std::string ckpt_path = cfg.ckpt_path;
  if (ckpt_path.empty() && !cfg.out_dir.empty())
    ckpt_path = (fs::path(cfg.out_dir) / "ckpt.bin").string();
  if (!ckpt_path.empty()) {
    const fs::path parent = fs::path(ckpt_path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
  }

  const auto import_from = [&](const Checkpoint& ck) {
    for (const std::string& name : ps.names()) {
      const Tensor& src = ck.at(name);
      Tensor dst = ps.at(name);
      require(src.numel() == dst.numel(),
              "train: checkpoint shape mismatch for " + name);
      dst.data() = src.data();
    }
    adam.import_state("opt.", ck.items());
  };

  long start_step = 0;
  if (!cfg.resume.empty()) {
    Checkpoint ck = load_checkpoint(cfg.resume);
    import_from(ck);
    start_step = nlohmann::json::parse(ck.meta_json).value("step", 0L);
  }

  // Save, then re-import what landed on disk: the fp32 round trip makes the
  // live state identical to what a later resume will start from.
  const auto save_ckpt = [&](long step) {
    if (ckpt_path.empty()) return;
    std::vector<std::pair<std::string, Tensor>> tensors;
    for (const std::string& name : ps.names())
      tensors.emplace_back(name, ps.at(name));
    for (auto& kv : adam.export_state("opt.")) tensors.push_back(kv);
    nlohmann::json meta;
    meta["step"] = step;
    meta["seed"] = cfg.seed;
    save_checkpoint(ckpt_path, tensors, meta.dump());
    import_from(load_checkpoint(ckpt_path));
  };

  TrainResult result;
  const auto evaluate = [&](long step) {
    NoGradScope ng;
    TrainEvalRow row;
    row.step = step;
    double loss_acc = 0, train_acc = 0, held_acc = 0;
    long train_n = 0, held_n = 0;
    for (SceneData& d : data) {
      std::mt19937_64 rng(mix_seed(cfg.seed, 0xe7a1));
      ModelOutput out = model.forward(d.images, d.cams, rng);
      GaussianSet set = activate_params(out.raw);
      for (size_t i = 0; i < d.cams.size(); ++i) {
        Tensor pred = render_gaussians(set, d.cams[i]);
        loss_acc += total_loss(pred, d.targets[i], cfg.loss).item();
        train_acc += psnr(pred, d.targets[i]);
        ++train_n;
      }
      for (size_t i = 0; i < d.held_cams.size(); ++i) {
        held_acc +=
            psnr(render_gaussians(set, d.held_cams[i]), d.held_targets[i]);
        ++held_n;
      }
    }
    row.loss = loss_acc / static_cast<double>(train_n);
    row.train_psnr = train_acc / static_cast<double>(train_n);
    if (held_n > 0) row.heldout_psnr = held_acc / static_cast<double>(held_n);
    result.history.push_back(row);
    if (cfg.log)
      (*cfg.log) << "train step " << step << " loss " << row.loss
                 << " train_psnr " << row.train_psnr << " heldout_psnr "
                 << row.heldout_psnr << "\n";
  };

  evaluate(start_step);
  result.psnr_init = result.history.front().train_psnr;

  for (long t = start_step; t < cfg.steps; ++t) {
    SceneData& d = data[static_cast<size_t>(t) % data.size()];
    ps.zero_grads();
    std::mt19937_64 step_rng(mix_seed(cfg.seed, static_cast<uint64_t>(t)));

    Tape tape;
    TapeScope scope(tape);
    ModelOutput out = model.forward(d.images, d.cams, step_rng);
    GaussianSet set = activate_params(out.raw);
    Tensor loss;
    for (size_t i = 0; i < d.cams.size(); ++i) {
      Tensor li =
          total_loss(render_gaussians(set, d.cams[i]), d.targets[i], cfg.loss);
      loss = loss.defined() ? ops::add(loss, li) : li;
    }
    loss = ops::mul_scalar(loss, 1.0 / static_cast<double>(d.cams.size()));
    if (!std::isfinite(loss.item()))
      throw ContractError("train: non-finite loss at step " +
                          std::to_string(t));
    tape.backward(loss);
    if (cfg.clip_norm > 0) clip_grad_norm(params, cfg.clip_norm);
    adam.step();
    result.steps_run++;

    const long done = t + 1;
    if (cfg.eval_every > 0 && done % cfg.eval_every == 0 && done != cfg.steps)
      evaluate(done);
    if (cfg.ckpt_every > 0 && done % cfg.ckpt_every == 0 && done != cfg.steps)
      save_ckpt(done);
  }

  if (cfg.steps > start_step) evaluate(cfg.steps);
  save_ckpt(cfg.steps);

  result.psnr_final = result.history.back().train_psnr;
  result.heldout_final = result.history.back().heldout_psnr;

  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    std::ofstream csv(fs::path(cfg.out_dir) / "metrics.csv");
    csv << "step,loss,train_psnr,heldout_psnr\n";
    for (const TrainEvalRow& r : result.history)
      csv << r.step << "," << r.loss << "," << r.train_psnr << ","
          << r.heldout_psnr << "\n";
  }
  return result;
}

}  // namespace unigs
