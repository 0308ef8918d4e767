#include "unigs/checks.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include "unigs/adam.hpp"
#include "unigs/camera.hpp"
#include "unigs/checkpoint.hpp"
#include "unigs/common.hpp"
#include "unigs/decoder.hpp"
#include "unigs/gaussians.hpp"
#include "unigs/gradcheck.hpp"
#include "unigs/losses.hpp"
#include "unigs/mvdfa.hpp"
#include "unigs/ops.hpp"
#include "unigs/renderer.hpp"
#include "unigs/scene.hpp"
#include "unigs/sesa.hpp"
#include "unigs/synth.hpp"
#include "unigs/tensor.hpp"

namespace fs = std::filesystem;

namespace unigs {
namespace {

struct CheckFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void expect(bool cond, const std::string& msg) {
  if (!cond) throw CheckFailure(msg);
}

Tensor randn(Shape shape, std::mt19937_64& rng, double std = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  std::normal_distribution<double> d(0.0, std);
  for (double& v : t.data()) v = d(rng);
  return t;
}

fs::path unique_temp_dir() {
  const auto now = std::chrono::steady_clock::now().time_since_epoch().count();
  std::ostringstream name;
  name << "unigs-selfcheck-" << std::hex << (static_cast<uint64_t>(now) ^ mix_seed(0x7e3, static_cast<uint64_t>(now)));
  fs::path p = fs::temp_directory_path() / name.str();
  fs::create_directories(p);
  return p;
}

// ---- individual checks ----------------------------------------------------

std::string check_softmax_rows() {
  std::mt19937_64 rng(11);
  Tensor x = randn({6, 9}, rng);
  Tensor s = ops::softmax(x, 1);
  for (long r = 0; r < 6; ++r) {
    double sum = 0;
    for (long c = 0; c < 9; ++c) sum += s.at({r, c});
    expect(std::fabs(sum - 1.0) <= 1e-9,
           "softmax row " + std::to_string(r) + " sums to " +
               std::to_string(sum));
  }
  Tensor x3 = randn({3, 4, 5}, rng);
  Tensor s3 = ops::softmax(x3, 2);
  for (long a = 0; a < 3; ++a)
    for (long b = 0; b < 4; ++b) {
      double sum = 0;
      for (long c = 0; c < 5; ++c) sum += s3.at({a, b, c});
      expect(std::fabs(sum - 1.0) <= 1e-9, "softmax trailing-axis sum off");
    }
  return "row sums within 1e-9";
}

std::string check_kernel_gradients() {
  std::mt19937_64 rng(23);
  {
    std::vector<Tensor> inputs = {randn({4, 6}, rng), randn({6, 5}, rng, 0.5),
                                  randn({5}, rng, 0.1), randn({5}, rng, 0.2),
                                  randn({5}, rng, 0.2)};
    auto f = [](const std::vector<Tensor>& in) {
      Tensor y = ops::linear(in[0], in[1], in[2]);
      y = ops::layer_norm(y, ops::add_scalar(in[3], 1.0), in[4]);
      y = ops::softmax(y, 1);
      return ops::sum(ops::mul(y, y));
    };
    GradCheckReport rep = grad_check(f, inputs);
    expect(rep.pass, "dense chain gradients: " + rep.worst);
  }
  {
    std::mt19937_64 prng(29);
    Tensor feat = randn({3, 5, 7}, prng);
    Tensor pts = Tensor::zeros({4, 2});
    std::uniform_real_distribution<double> u(-0.85, 0.85);
    for (double& v : pts.data()) v = u(prng);
    auto f = [](const std::vector<Tensor>& in) {
      Tensor s = ops::grid_sample(in[0], in[1]);
      return ops::sum(ops::mul(s, s));
    };
    GradCheckReport rep = grad_check(f, {feat, pts});
    expect(rep.pass, "sampling gradients: " + rep.worst);
  }
  return "spot FD checks pass at 1e-5";
}

Camera random_camera(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::array<double, 4> q{1.0 + u(rng), u(rng), u(rng), u(rng)};
  double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
  for (double& v : q) v /= n;
  Mat3 R = rotation_from_quat(q);
  Camera cam;
  cam.width = 31 + (rng() % 40);
  cam.height = 23 + (rng() % 40);
  cam.K = Mat3::identity();
  cam.K(0, 0) = 30 + 40 * std::fabs(u(rng));
  cam.K(1, 1) = 30 + 40 * std::fabs(u(rng));
  cam.K(0, 2) = (static_cast<double>(cam.width) - 1) / 2 + u(rng);
  cam.K(1, 2) = (static_cast<double>(cam.height) - 1) / 2 + u(rng);
  cam.w2c = Mat4::identity();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) cam.w2c(r, c) = R(r, c);
  cam.w2c(0, 3) = u(rng);
  cam.w2c(1, 3) = u(rng);
  cam.w2c(2, 3) = u(rng);
  return cam;
}

std::string check_projection_oracle() {
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  long front = 0;
  for (int t = 0; t < 100; ++t) {
    Camera cam = random_camera(rng);
    Vec3 p{2 * u(rng), 2 * u(rng), 2 * u(rng)};
    const Vec3 pc = cam.point_to_camera(p);
    ProjectedPoint pr = project_point(cam, p);
    if (pc.z <= 1e-6) {
      expect(!pr.valid, "point behind the camera marked valid");
      continue;
    }
    ++front;
    const double px = cam.fx() * pc.x / pc.z + cam.cx();
    const double py = cam.fy() * pc.y / pc.z + cam.cy();
    const double uu = 2 * px / (static_cast<double>(cam.width) - 1) - 1;
    const double vv = 2 * py / (static_cast<double>(cam.height) - 1) - 1;
    expect(std::fabs(pr.px - px) <= 1e-9 && std::fabs(pr.py - py) <= 1e-9,
           "pixel projection off oracle");
    expect(std::fabs(pr.u - uu) <= 1e-9 && std::fabs(pr.v - vv) <= 1e-9,
           "normalized projection off oracle");
    expect(std::fabs(pr.depth - pc.z) <= 1e-9, "depth off oracle");
    expect(pr.valid == (std::fabs(uu) <= 1.0 && std::fabs(vv) <= 1.0),
           "visibility flag disagrees with the oracle");
  }
  expect(front > 20, "oracle draw produced too few visible points");
  return "100 draws within 1e-9";
}

std::string check_embedding_rigid() {
  std::mt19937_64 rng(41);
  for (int t = 0; t < 100; ++t) {
    Camera cam = random_camera(rng);
    // flattened embedding equals homog(normalized K) * w2c, row-major
    const Mat3 kn = cam.normalized_intrinsics();
    Mat4 hk = Mat4::identity();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) hk(r, c) = kn(r, c);
    std::array<double, 16> want{};
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) {
        double acc = 0;
        for (int k = 0; k < 4; ++k) acc += hk(r, k) * cam.w2c(k, c);
        want[static_cast<size_t>(r * 4 + c)] = acc;
      }
    const std::array<double, 16> got = cam.embedding_input();
    for (int i = 0; i < 16; ++i)
      expect(std::fabs(got[static_cast<size_t>(i)] -
                       want[static_cast<size_t>(i)]) <= 1e-9,
             "camera embedding entry off oracle");
    // rigid inverse: the reported center maps to the camera origin
    const Vec3 c0 = cam.point_to_camera(cam.center());
    expect(c0.norm() <= 1e-9, "camera center does not map to the origin");
  }
  return "embedding + rigid inverse within 1e-9";
}

std::string check_covariance_oracle() {
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    std::array<double, 4> q{1.5 * u(rng), u(rng), u(rng), u(rng)};
    double n =
        std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    if (n < 1e-3) continue;
    for (double& v : q) v /= n;
    Vec3 s{0.1 + std::fabs(u(rng)), 0.1 + std::fabs(u(rng)),
           0.1 + std::fabs(u(rng))};
    const Mat3 sigma = build_covariance(q, s);
    // independent quaternion-to-matrix expansion
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 R;
    R(0, 0) = 1 - 2 * (y * y + z * z);
    R(0, 1) = 2 * (x * y - w * z);
    R(0, 2) = 2 * (x * z + w * y);
    R(1, 0) = 2 * (x * y + w * z);
    R(1, 1) = 1 - 2 * (x * x + z * z);
    R(1, 2) = 2 * (y * z - w * x);
    R(2, 0) = 2 * (x * z - w * y);
    R(2, 1) = 2 * (y * z + w * x);
    R(2, 2) = 1 - 2 * (x * x + y * y);
    Mat3 want;
    const std::array<double, 3> s2{s.x * s.x, s.y * s.y, s.z * s.z};
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        double acc = 0;
        for (int k = 0; k < 3; ++k)
          acc += R(r, k) * s2[static_cast<size_t>(k)] * R(c, k);
        want(r, c) = acc;
      }
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        expect(std::fabs(sigma(r, c) - want(r, c)) <= 1e-9,
               "covariance entry off oracle");
  }
  return "R diag(s^2) R^T within 1e-9";
}

std::string check_fps_oracle() {
  std::mt19937_64 rng(47);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 40; ++t) {
    const long n = 1 + static_cast<long>(rng() % 24);
    Tensor pts = Tensor::zeros({n, 3});
    for (double& v : pts.data()) v = u(rng);
    const long k = 1 + static_cast<long>(rng() % n);
    // exhaustive greedy reference
    std::vector<long> ref{0};
    std::vector<char> taken(static_cast<size_t>(n), 0);
    taken[0] = 1;
    auto dist2 = [&](long a, long b) {
      double acc = 0;
      for (long d = 0; d < 3; ++d) {
        double diff = pts.at({a, d}) - pts.at({b, d});
        acc += diff * diff;
      }
      return acc;
    };
    while (static_cast<long>(ref.size()) < k) {
      long best = -1;
      double best_d = -1;
      for (long i = 0; i < n; ++i) {
        if (taken[static_cast<size_t>(i)]) continue;
        double di = 1e300;
        for (long j : ref) di = std::min(di, dist2(i, j));
        if (di > best_d) {
          best_d = di;
          best = i;
        }
      }
      ref.push_back(best);
      taken[static_cast<size_t>(best)] = 1;
    }
    expect(farthest_point_sample(pts, k) == ref,
           "selection differs from the exhaustive greedy reference");
  }
  return "40 random sets match exactly";
}

std::string check_sesa_dense() {
  std::mt19937_64 rng(53);
  const long n = 48, c = 16;
  ParamStore ps;
  SESAConfig cfg;
  cfg.channels = c;
  cfg.rate = 1.0;
  SESA mod(ps, "s.", cfg, rng);
  Tensor queries = randn({n, c}, rng, 0.7);
  Tensor pos = randn({n, 3}, rng);
  Tensor got = mod.forward(queries, pos);

  Tensor empty;
  Tensor q = ops::linear(queries, ps.at("s.wq"), empty);
  Tensor k = ops::linear(queries, ps.at("s.wk"), empty);
  Tensor v = ops::linear(queries, ps.at("s.wv"), ps.at("s.bv"));
  Tensor scores =
      ops::mul_scalar(ops::matmul_nt(q, k), 1.0 / std::sqrt(double(c)));
  Tensor attn = ops::softmax(scores, 1);
  for (long r = 0; r < n; ++r) {
    double sum = 0;
    for (long j = 0; j < n; ++j) sum += attn.at({r, j});
    expect(std::fabs(sum - 1.0) <= 1e-9, "attention row does not sum to 1");
  }
  Tensor want = ops::linear(ops::matmul(attn, v), ps.at("s.wo"), ps.at("s.bo"));
  double max_diff = 0;
  for (long i = 0; i < got.numel(); ++i)
    max_diff = std::max(max_diff, std::fabs(got.data()[static_cast<size_t>(i)] -
                                            want.data()[static_cast<size_t>(i)]));
  expect(max_diff <= 1e-10,
         "subset attention at full rate differs from dense attention by " +
             std::to_string(max_diff));
  return "rate 1.0 equals dense attention within 1e-10";
}

std::string check_mvdfa_contracts() {
  std::mt19937_64 rng(59);
  const long n = 6, c = 8, hf = 5, wf = 5;
  const std::vector<Camera> cams = ring_cameras(3, 17, 17);
  MVDFAConfig cfg;
  cfg.channels = c;
  cfg.num_samples = 3;
  ParamStore ps;
  MVDFA mod(ps, "m.", cfg, rng);
  // wake the zero-initialized heads so the contracts are exercised off the
  // trivial point
  for (const std::string& name : ps.names()) {
    if (name.find("cam.w2") == std::string::npos &&
        name.find("offset.w") == std::string::npos &&
        name.find("score.w") == std::string::npos)
      continue;
    Tensor t = ps.at(name);
    std::normal_distribution<double> d(0.0, 0.05);
    for (double& v : t.data()) v = d(rng);
  }

  const Vec3 center = scene_center(cams);
  Tensor centers = Tensor::zeros({n, 3});
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (long i = 0; i < n; ++i) {
    centers.data()[static_cast<size_t>(3 * i) + 0] = center.x + u(rng);
    centers.data()[static_cast<size_t>(3 * i) + 1] = center.y + u(rng);
    centers.data()[static_cast<size_t>(3 * i) + 2] = center.z + u(rng);
  }
  Tensor queries = randn({n, c}, rng, 0.5);
  std::vector<Tensor> feats;
  for (size_t i = 0; i < cams.size(); ++i)
    feats.push_back(randn({c, hf, wf}, rng, 0.8));

  Tensor out = mod.forward(queries, centers, feats, cams);
  for (const Tensor& sc : mod.last_scores()) {
    for (long r = 0; r < sc.dim(0); ++r) {
      double sum = 0;
      for (long j = 0; j < sc.dim(1); ++j) {
        expect(sc.at({r, j}) >= 0, "negative sampling weight");
        sum += sc.at({r, j});
      }
      expect(std::fabs(sum - 1.0) <= 1e-9, "sampling weights do not sum to 1");
    }
  }

  std::vector<Tensor> zero_feats;
  for (size_t i = 0; i < cams.size(); ++i)
    zero_feats.push_back(Tensor::zeros({c, hf, wf}));
  Tensor zout = mod.forward(queries, centers, zero_feats, cams);
  for (double v : zout.data())
    expect(v == 0.0, "zero features produced a nonzero update");

  const std::vector<size_t> perm{2, 0, 1};
  std::vector<Tensor> pf;
  std::vector<Camera> pc;
  for (size_t i : perm) {
    pf.push_back(feats[i]);
    pc.push_back(cams[i]);
  }
  Tensor pout = mod.forward(queries, centers, pf, pc);
  for (long i = 0; i < out.numel(); ++i)
    expect(out.data()[static_cast<size_t>(i)] ==
               pout.data()[static_cast<size_t>(i)],
           "view permutation changed the fused update");

  // single-sample mode: the softmax over one logit must be exactly one
  ParamStore ps1;
  std::mt19937_64 rng1(59);
  MVDFAConfig cfg1 = cfg;
  cfg1.num_samples = 1;
  MVDFA mod1(ps1, "m.", cfg1, rng1);
  (void)mod1.forward(queries, centers, feats, cams);
  for (const Tensor& sc : mod1.last_scores())
    for (double v : sc.data())
      expect(v == 1.0, "single-sample weights not exactly one");
  return "weights normalized, zero-update and permutation contracts hold";
}

std::string check_renderer_compositing() {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const long n = 6;
  RawGaussianParams raw = make_raw_gaussians(n);
  for (long i = 0; i < n; ++i) {
    raw.mu.data()[static_cast<size_t>(3 * i) + 0] = 0.4 * u(rng);
    raw.mu.data()[static_cast<size_t>(3 * i) + 1] = 0.4 * u(rng);
    raw.mu.data()[static_cast<size_t>(3 * i) + 2] = 2.0 + 0.4 * u(rng);
    raw.opacity.data()[static_cast<size_t>(i)] = u(rng);
    for (int d = 0; d < 3; ++d)
      raw.scale.data()[static_cast<size_t>(3 * i + d)] =
          std::log(0.12 + 0.08 * std::fabs(u(rng)));
    raw.rotation.data()[static_cast<size_t>(4 * i)] = 1.0;
    for (int ch = 0; ch < 3; ++ch)
      raw.sh.data()[static_cast<size_t>(12 * i + 4 * ch)] = 0.5 / kShC0;
  }
  Camera cam;
  cam.width = cam.height = 16;
  cam.K = Mat3::identity();
  cam.K(0, 0) = cam.K(1, 1) = 18;
  cam.K(0, 2) = cam.K(1, 2) = 7.5;

  NoGradScope ng;
  GaussianSet set = activate_params(raw);
  RenderConfig rc;
  rc.background = {1.0, 1.0, 1.0};
  Tensor img = render_gaussians(set, cam, rc);
  for (double v : img.data())
    expect(std::fabs(v - 1.0) <= 1e-12,
           "white-on-white compositing drifts from 1");

  // order invariance on a colored scene
  for (long i = 0; i < n; ++i)
    for (int ch = 0; ch < 3; ++ch)
      raw.sh.data()[static_cast<size_t>(12 * i + 4 * ch)] = u(rng);
  GaussianSet colored = activate_params(raw);
  Tensor a = render_gaussians(colored, cam);
  std::vector<long> perm{3, 0, 5, 1, 4, 2};
  RawGaussianParams shuffled = make_raw_gaussians(n);
  for (long i = 0; i < n; ++i) {
    const long s = perm[static_cast<size_t>(i)];
    for (int d = 0; d < 3; ++d)
      shuffled.mu.data()[static_cast<size_t>(3 * i + d)] =
          raw.mu.at({s, d});
    shuffled.opacity.data()[static_cast<size_t>(i)] = raw.opacity.at({s, 0});
    for (int d = 0; d < 3; ++d)
      shuffled.scale.data()[static_cast<size_t>(3 * i + d)] =
          raw.scale.at({s, d});
    for (int d = 0; d < 4; ++d)
      shuffled.rotation.data()[static_cast<size_t>(4 * i + d)] =
          raw.rotation.at({s, d});
    for (int d = 0; d < 12; ++d)
      shuffled.sh.data()[static_cast<size_t>(12 * i + d)] = raw.sh.at({s, d});
  }
  Tensor b = render_gaussians(activate_params(shuffled), cam);
  for (long i = 0; i < a.numel(); ++i)
    expect(std::fabs(a.data()[static_cast<size_t>(i)] -
                     b.data()[static_cast<size_t>(i)]) <= 1e-12,
           "input order changed the render");
  return "telescoping and order invariance within 1e-12";
}

ModelConfig tiny_model_config() {
  ModelConfig mc;
  mc.channels = 16;
  mc.layers = 1;
  mc.num_samples = 2;
  mc.sesa_rate = 0.25;
  mc.n_gaussians = 48;
  mc.ffn_hidden = 24;
  mc.encoder.base_channels = 8;
  mc.encoder.mid_channels = 12;
  mc.encoder.out_channels = 16;
  return mc;
}

std::string check_decoder_unitary() {
  const ModelConfig mc = tiny_model_config();
  ParamStore ps;
  std::mt19937_64 rng(67);
  ReconModel model(ps, mc, rng);
  const std::vector<Camera> cams = ring_cameras(3, 16, 16);
  std::mt19937_64 irng(68);
  Tensor images = randn({3, 3, 16, 16}, irng, 0.3);
  for (double& v : images.data()) v = std::clamp(std::fabs(v), 0.0, 1.0);

  long prev_bytes = -1;
  for (long nv : {1L, 3L}) {
    Tensor sub = Tensor::zeros({nv, 3, 16, 16});
    std::copy(images.data().begin(),
              images.data().begin() + sub.numel(), sub.data().begin());
    std::vector<Camera> cs(cams.begin(), cams.begin() + nv);
    std::mt19937_64 frng(69);
    ModelOutput out = model.forward(sub, cs, frng);
    expect(out.raw.count() == mc.n_gaussians,
           "gaussian count depends on the view count");
    expect(out.queries.dim(0) == mc.n_gaussians &&
               out.queries.dim(1) == mc.channels,
           "query buffer shape depends on the view count");
    if (prev_bytes >= 0)
      expect(model.query_buffer_bytes() == prev_bytes,
             "query buffer bytes changed with the view count");
    prev_bytes = model.query_buffer_bytes();
  }

  // untrained identity: the refined centers equal the starting centers
  ModelConfig rc = mc;
  rc.init = "random";
  rc.init_box_half = 0.8;
  ParamStore ps2;
  std::mt19937_64 rng2(67);
  ReconModel rmodel(ps2, rc, rng2);
  std::mt19937_64 fa(71), fb(71);
  ModelOutput out = rmodel.forward(images, cams, fa);
  RawGaussianParams want =
      init_random_in_cov(rc.n_gaussians, cams, fb, rc.init_box_half);
  for (long i = 0; i < want.mu.numel(); ++i)
    expect(out.raw.mu.data()[static_cast<size_t>(i)] ==
               want.mu.data()[static_cast<size_t>(i)],
           "zero-initialized head moved the starting centers");
  return "constant budget across view counts; untrained stack is identity";
}

std::string check_ablation_switches() {
  const std::vector<Camera> cams = ring_cameras(2, 16, 16);
  std::mt19937_64 irng(73);
  Tensor images = randn({2, 3, 16, 16}, irng, 0.3);
  for (double& v : images.data()) v = std::clamp(std::fabs(v), 0.0, 1.0);

  auto run = [&](bool use_mvdfa, bool use_sesa) {
    ModelConfig mc = tiny_model_config();
    mc.use_mvdfa = use_mvdfa;
    mc.use_sesa = use_sesa;
    ParamStore ps;
    std::mt19937_64 rng(67);
    ReconModel model(ps, mc, rng);
    // wake the zero-started tensors the way training's first steps would
    std::mt19937_64 nudge(99);
    std::normal_distribution<double> d(0.0, 0.05);
    for (const std::string& name : ps.names()) {
      if (name.find("head.w") == std::string::npos &&
          name.find("cam.w2") == std::string::npos)
        continue;
      Tensor t = ps.at(name);
      for (double& v : t.data()) v = d(nudge);
    }
    std::mt19937_64 frng(75);
    return model.forward(images, cams, frng);
  };

  ModelOutput base = run(true, true);
  ModelOutput no_mv = run(false, true);
  ModelOutput no_se = run(true, false);
  auto max_diff = [](const Tensor& a, const Tensor& b) {
    double m = 0;
    for (long i = 0; i < a.numel(); ++i)
      m = std::max(m, std::fabs(a.data()[static_cast<size_t>(i)] -
                                b.data()[static_cast<size_t>(i)]));
    return m;
  };
  expect(max_diff(base.raw.mu, no_mv.raw.mu) > 1e-9,
         "disabling the cross-view block did not change the output");
  expect(max_diff(base.raw.mu, no_se.raw.mu) > 1e-9,
         "disabling the self-attention block did not change the output");
  return "each sub-block contributes to the output";
}

std::string check_pipeline_gradients() {
  ModelConfig mc;
  mc.channels = 32;
  mc.layers = 2;
  mc.num_samples = 2;
  mc.sesa_rate = 0.05;
  mc.n_gaussians = 256;
  mc.ffn_hidden = 48;
  mc.encoder.base_channels = 12;
  mc.encoder.mid_channels = 20;
  mc.encoder.out_channels = 32;

  ParamStore ps;
  std::mt19937_64 rng(79);
  ReconModel model(ps, mc, rng);
  const std::vector<Camera> cams = ring_cameras(4, 32, 32);
  std::mt19937_64 irng(80);
  Tensor images = randn({4, 3, 32, 32}, irng, 0.3);
  for (double& v : images.data()) v = std::clamp(std::fabs(v), 0.0, 1.0);

  Tape tape;
  TapeScope scope(tape);
  std::mt19937_64 frng(81);
  ModelOutput out = model.forward(images, cams, frng);
  GaussianSet set = activate_params(out.raw);
  Tensor target = ops::select(images, 0, 0);
  Tensor loss = mse_loss(render_gaussians(set, cams[0]), target);
  expect(std::isfinite(loss.item()), "loss is not finite");
  tape.backward(loss);
  long with_grad = 0;
  for (const std::string& name : ps.names()) {
    Tensor p = ps.at(name);
    if (!p.has_grad()) continue;
    ++with_grad;
    for (double g : p.grad())
      expect(std::isfinite(g), "non-finite gradient in " + name);
  }
  expect(with_grad > 0, "no parameter received a gradient");
  return "full-stack backward is finite across " +
         std::to_string(with_grad) + " tensors";
}

std::string check_checkpoint_roundtrip() {
  std::mt19937_64 rng(83);
  const fs::path dir = unique_temp_dir();
  const std::string path = (dir / "state.bin").string();
  std::vector<std::pair<std::string, Tensor>> tensors = {
      {"a", randn({3, 5}, rng)},
      {"b.weight", randn({7}, rng, 10.0)},
      {"c", Tensor::full({2, 2, 2}, -0.25)},
  };
  save_checkpoint(path, tensors, "{\"step\":12}");
  Checkpoint ck = load_checkpoint(path);
  expect(ck.meta_json.find("12") != std::string::npos, "meta lost");
  for (const auto& [name, t] : tensors) {
    const Tensor& back = ck.at(name);
    expect(back.shape() == t.shape(), "shape lost for " + name);
    for (long i = 0; i < t.numel(); ++i) {
      const double rel =
          std::fabs(back.data()[static_cast<size_t>(i)] -
                    t.data()[static_cast<size_t>(i)]) /
          std::max(1.0, std::fabs(t.data()[static_cast<size_t>(i)]));
      expect(rel <= 1e-7, "payload drifted past fp32 rounding for " + name);
    }
  }
  // corrupting the magic must be rejected
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.put('X');
  }
  bool threw = false;
  try {
    load_checkpoint(path);
  } catch (const std::exception&) {
    threw = true;
  }
  expect(threw, "corrupted header was accepted");
  fs::remove_all(dir);
  return "fp32 round trip within 1e-7; bad header rejected";
}

std::string check_scene_roundtrip() {
  const fs::path dir = unique_temp_dir();
  SynthConfig cfg;
  cfg.kind = "spheres3";
  cfg.n_views = 2;
  cfg.n_heldout = 1;
  cfg.width = cfg.height = 16;
  cfg.seed = 5;
  SynthResult synth = synth_scene((dir / "scene").string(), cfg);
  Scene loaded = load_scene((dir / "scene").string());
  expect(loaded.views.size() == 3, "view count lost");
  expect(loaded.views[2].split == "held-out", "split tag lost");
  expect(loaded.input_indices().size() == 2, "input split lost");
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      const double id = (r == c) ? 1.0 : 0.0;
      expect(std::fabs(loaded.views[0].cam.w2c(r, c) - id) <= 1e-10,
             "first pose is not the identity");
    }
  double max_cam = 0;
  for (size_t i = 0; i < loaded.views.size(); ++i)
    for (int j = 0; j < 16; ++j)
      max_cam = std::max(
          max_cam,
          std::fabs(loaded.views[i].cam.w2c.m[static_cast<size_t>(j)] -
                    synth.scene.views[i].cam.w2c.m[static_cast<size_t>(j)]));
  expect(max_cam <= 1e-10, "poses drifted through the json round trip");

  NoGradScope ng;
  GaussianSet set = activate_params(synth.gt);
  for (size_t i = 0; i < loaded.views.size(); ++i) {
    Tensor a = render_gaussians(set, synth.scene.views[i].cam);
    Tensor b = render_gaussians(set, loaded.views[i].cam);
    for (long j = 0; j < a.numel(); ++j)
      expect(std::fabs(a.data()[static_cast<size_t>(j)] -
                       b.data()[static_cast<size_t>(j)]) <= 1e-12,
             "re-render from reloaded cameras drifted");
  }
  fs::remove_all(dir);
  return "cameras round-trip within 1e-10; renders match within 1e-12";
}

}  // namespace

CheckReport run_checks() {
  const std::vector<std::pair<std::string, std::function<std::string()>>>
      suite = {
          {"softmax-rows-normalized", check_softmax_rows},
          {"kernel-gradients", check_kernel_gradients},
          {"projection-oracle", check_projection_oracle},
          {"embedding-rigid-oracle", check_embedding_rigid},
          {"covariance-oracle", check_covariance_oracle},
          {"fps-greedy-oracle", check_fps_oracle},
          {"sesa-dense-equivalence", check_sesa_dense},
          {"mvdfa-contracts", check_mvdfa_contracts},
          {"renderer-compositing", check_renderer_compositing},
          {"decoder-unitary-budget", check_decoder_unitary},
          {"ablation-switches", check_ablation_switches},
          {"pipeline-gradients-finite", check_pipeline_gradients},
          {"checkpoint-roundtrip", check_checkpoint_roundtrip},
          {"scene-roundtrip", check_scene_roundtrip},
      };

  CheckReport report;
  for (const auto& [name, fn] : suite) {
    CheckResult r;
    r.name = name;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      r.detail = fn();
      r.pass = true;
    } catch (const std::exception& e) {
      r.pass = false;
      r.detail = e.what();
    }
    r.ms = std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - t0)
               .count();
    report.results.push_back(std::move(r));
  }
  return report;
}

void print_report(const CheckReport& report, std::ostream& os) {
  long passed = 0;
  for (const CheckResult& r : report.results) {
    char head[64];
    std::snprintf(head, sizeof(head), "[%s] %-28s %8.1f ms  ",
                  r.pass ? "PASS" : "FAIL", r.name.c_str(), r.ms);
    os << head << r.detail << "\n";
    if (r.pass) ++passed;
  }
  os << "checks: " << passed << "/" << report.results.size() << " passed\n";
  if (report.results.empty()) os << "checks: empty suite counts as failure\n";
}

}  // namespace unigs
