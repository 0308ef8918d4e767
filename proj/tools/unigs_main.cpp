#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "unigs/bench.hpp"
#include "unigs/checks.hpp"
#include "unigs/common.hpp"
#include "unigs/fit.hpp"
#include "unigs/losses.hpp"
#include "unigs/png_io.hpp"
#include "unigs/renderer.hpp"
#include "unigs/scene.hpp"
#include "unigs/synth.hpp"
#include "unigs/train.hpp"

namespace fs = std::filesystem;
using namespace unigs;

namespace {

void apply_model_config(const std::string& path, ModelConfig& mc) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open config file " + path);
  nlohmann::json j;
  in >> j;
  mc.channels = j.value("channels", mc.channels);
  mc.layers = j.value("layers", mc.layers);
  mc.num_samples = j.value("num_samples", mc.num_samples);
  mc.sesa_rate = j.value("sesa_rate", mc.sesa_rate);
  mc.n_gaussians = j.value("n_gaussians", mc.n_gaussians);
  mc.ffn_hidden = j.value("ffn_hidden", mc.ffn_hidden);
  mc.init = j.value("init", mc.init);
  mc.init_box_half = j.value("init_box_half", mc.init_box_half);
  mc.use_mvdfa = j.value("use_mvdfa", mc.use_mvdfa);
  mc.use_sesa = j.value("use_sesa", mc.use_sesa);
  if (j.contains("encoder")) {
    const nlohmann::json& e = j["encoder"];
    mc.encoder.base_channels = e.value("base_channels", mc.encoder.base_channels);
    mc.encoder.mid_channels = e.value("mid_channels", mc.encoder.mid_channels);
    mc.encoder.out_channels = e.value("out_channels", mc.encoder.out_channels);
    mc.encoder.window = e.value("window", mc.encoder.window);
  }
  if (mc.encoder.out_channels != mc.channels)
    mc.encoder.out_channels = mc.channels;
}

int run(int argc, char** argv) {
  CLI::App app{"gaussian splat reconstruction toolkit"};
  app.require_subcommand(1);

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "generate a synthetic scene");
  std::string synth_kind = "spheres3", synth_out;
  long synth_views = 8, synth_res = 64, synth_holdout = 2, synth_random = 48;
  unsigned long synth_seed = 1;
  synth->add_option("--scene", synth_kind, "spheres3 | cube | random_gaussians");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--views", synth_views, "input views on the ring");
  synth->add_option("--resolution", synth_res, "square image size");
  synth->add_option("--holdout", synth_holdout, "extra held-out views");
  synth->add_option("--seed", synth_seed, "content seed");
  synth->add_option("--n-random", synth_random,
                    "splat count for random_gaussians");
  synth->callback([&] {
    SynthConfig cfg;
    cfg.kind = synth_kind;
    cfg.n_views = synth_views;
    cfg.n_heldout = synth_holdout;
    cfg.width = cfg.height = synth_res;
    cfg.seed = synth_seed;
    cfg.n_random = synth_random;
    SynthResult r = synth_scene(synth_out, cfg);
    std::cout << "wrote " << r.scene.views.size() << " views ("
              << r.gt.count() << " gt splats) to " << synth_out << "\n";
  });

  // ---- fit ----
  auto* fit = app.add_subcommand("fit", "optimize splats against one scene");
  std::string fit_scene_dir, fit_out;
  long fit_n = 2000, fit_iters = 1500, fit_eval = 0;
  double fit_lr = 1e-4, fit_decay = 1.0;
  unsigned long fit_seed = 1;
  fit->add_option("--scene", fit_scene_dir, "scene directory")->required();
  fit->add_option("--out", fit_out, "output directory")->required();
  fit->add_option("--n-gaussians", fit_n, "splat budget");
  fit->add_option("--iters", fit_iters, "optimization steps");
  fit->add_option("--lr", fit_lr, "learning rate");
  fit->add_option("--lr-decay", fit_decay, "lr multiplier reached at the end");
  fit->add_option("--eval-every", fit_eval, "metrics cadence in steps");
  fit->add_option("--seed", fit_seed, "init seed");
  fit->callback([&] {
    FitConfig cfg;
    cfg.n_gaussians = fit_n;
    cfg.iters = fit_iters;
    cfg.lr = fit_lr;
    cfg.lr_decay = fit_decay;
    cfg.eval_every = fit_eval;
    cfg.seed = fit_seed;
    cfg.out_dir = fit_out;
    cfg.log = &std::cout;
    FitResult r = fit_scene(load_scene(fit_scene_dir), cfg);
    std::cout << "final train_psnr " << r.train_psnr << " heldout_psnr "
              << r.heldout_psnr << " heldout_ssim " << r.heldout_ssim << "\n";
  });

  // ---- train-tiny ----
  auto* train = app.add_subcommand("train-tiny",
                                   "overfit the model on a small scene set");
  std::vector<std::string> train_scenes;
  std::string train_out, train_config, train_resume;
  long train_iters = 3000, train_views = 4, train_res = 32, train_eval = 250;
  long train_ckpt_every = 0;
  double train_lr = 1e-4;
  unsigned long train_seed = 1;
  train->add_option("--scene", train_scenes,
                    "scene directory (repeatable; default: 4 generated)");
  train->add_option("--out", train_out, "output directory")->required();
  train->add_option("--iters", train_iters, "training steps");
  train->add_option("--lr", train_lr, "learning rate");
  train->add_option("--seed", train_seed, "seed");
  train->add_option("--views", train_views, "input views per generated scene");
  train->add_option("--resolution", train_res, "generated scene resolution");
  train->add_option("--eval-every", train_eval, "metrics cadence in steps");
  train->add_option("--ckpt-every", train_ckpt_every, "checkpoint cadence");
  train->add_option("--config", train_config, "JSON model-config overrides");
  train->add_option("--resume", train_resume, "checkpoint to continue from");
  train->callback([&] {
    std::vector<Scene> scenes;
    if (train_scenes.empty()) {
      for (long i = 0; i < 4; ++i) {
        SynthConfig sc;
        sc.kind = "spheres3";
        sc.n_views = train_views;
        sc.n_heldout = 2;
        sc.width = sc.height = train_res;
        sc.seed = train_seed + static_cast<unsigned long>(i);
        const std::string dir =
            (fs::path(train_out) / "scenes" / ("scene" + std::to_string(i)))
                .string();
        scenes.push_back(synth_scene(dir, sc).scene);
      }
    } else {
      for (const std::string& dir : train_scenes)
        scenes.push_back(load_scene(dir));
    }
    TrainConfig cfg;
    cfg.steps = train_iters;
    cfg.lr = train_lr;
    cfg.seed = train_seed;
    cfg.eval_every = train_eval;
    cfg.ckpt_every = train_ckpt_every;
    cfg.out_dir = train_out;
    cfg.resume = train_resume;
    cfg.log = &std::cout;
    if (!train_config.empty()) apply_model_config(train_config, cfg.model);
    TrainResult r = train_tiny(scenes, cfg);
    std::cout << "train_psnr " << r.psnr_init << " -> " << r.psnr_final
              << " (+" << (r.psnr_final - r.psnr_init) << " dB over "
              << r.steps_run << " steps)\n";
  });

  // ---- render ----
  auto* render = app.add_subcommand("render", "render a PLY from scene poses");
  std::string render_scene_dir, render_ply, render_out;
  render->add_option("--scene", render_scene_dir, "scene directory")
      ->required();
  render->add_option("--ply", render_ply, "splat file")->required();
  render->add_option("--out", render_out, "output directory")->required();
  render->callback([&] {
    Scene scene = load_scene(render_scene_dir);
    RawGaussianParams raw = load_ply(render_ply);
    fs::create_directories(render_out);
    NoGradScope ng;
    GaussianSet set = activate_params(raw);
    for (size_t i = 0; i < scene.views.size(); ++i) {
      Tensor img = render_gaussians(set, scene.views[i].cam);
      char buf[16];
      std::snprintf(buf, sizeof(buf), "%03zu.png", i);
      save_png((fs::path(render_out) / buf).string(), img);
      const Tensor target = load_view(scene, static_cast<long>(i)).image;
      std::cout << buf << " psnr " << psnr(img, target) << " ("
                << scene.views[i].split << ")\n";
    }
  });

  // ---- check ----
  auto* check = app.add_subcommand("check", "run the invariant suite");
  std::string fault;
  check->add_option("--inject-fault", fault,
                    "corrupt a kernel first (softmax-axis)");
  int check_rc = 0;
  check->callback([&] {
    if (fault == "softmax-axis") {
      set_injected_fault(Fault::softmax_axis);
      std::cout << "injected fault: softmax normalizes the wrong axis\n";
    } else if (!fault.empty()) {
      throw ContractError("unknown fault \"" + fault + "\"");
    }
    CheckReport report = run_checks();
    print_report(report, std::cout);
    set_injected_fault(Fault::none);
    check_rc = report.all_pass() ? 0 : 1;
  });

  // ---- bench ----
  auto* bench = app.add_subcommand("bench", "forward cost across view counts");
  std::string bench_out = "bench.csv", bench_config;
  unsigned long bench_seed = 1;
  long bench_repeats = 1;
  bench->add_option("--out", bench_out, "CSV path");
  bench->add_option("--seed", bench_seed, "weight/image seed");
  bench->add_option("--repeats", bench_repeats, "timed repeats, best-of");
  bench->add_option("--config", bench_config, "JSON model-config overrides");
  bench->callback([&] {
    BenchConfig cfg;
    cfg.seed = bench_seed;
    cfg.repeats = bench_repeats;
    if (!bench_config.empty()) apply_model_config(bench_config, cfg.model);
    std::vector<BenchRow> rows = bench_views(cfg);
    write_bench_csv(bench_out, rows);
    std::cout << bench_table(rows) << "wrote " << bench_out << "\n";
  });

  CLI11_PARSE(app, argc, argv);
  return check_rc;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
