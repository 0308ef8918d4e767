#include "unigs/decoder.hpp"

#include <cmath>

#include "unigs/ops.hpp"

namespace unigs {

namespace op = ops;

RawGaussianParams init_random_in_cov(long n, const std::vector<Camera>& cams,
                                     std::mt19937_64& rng, double box_half) {
  require(n > 0, "init: need at least one gaussian");
  require(!cams.empty(), "init: need at least one camera");
  Vec3 center = scene_center(cams);
  std::uniform_real_distribution<double> u(-box_half, box_half);
  std::vector<double> mu;
  mu.reserve(static_cast<size_t>(n * 3));
  long placed = 0, attempts = 0;
  const long max_attempts = 200 * n;
  while (placed < n) {
    Vec3 p{center.x + u(rng), center.y + u(rng), center.z + u(rng)};
    ++attempts;
    // after enough rejections take box samples as they come so the call
    // always terminates (degenerate rigs may see almost nothing)
    if (attempts <= max_attempts && !in_cone_of_vision(p, cams)) continue;
    mu.insert(mu.end(), {p.x, p.y, p.z});
    ++placed;
  }
  RawGaussianParams g = make_raw_gaussians(n);
  g.mu = Tensor::from_data({n, 3}, mu);
  for (double& v : g.scale.data()) v = std::log(0.05);
  return g;
}

ReconModel::ReconModel(ParamStore& ps, const ModelConfig& cfg,
                       std::mt19937_64& rng)
    : cfg_(cfg) {
  require(cfg.channels > 0 && cfg.layers > 0 && cfg.n_gaussians > 0,
          "model: channels, layers and n_gaussians must be positive");
  require(cfg.encoder.out_channels == cfg.channels,
          "model: encoder output width must match the query width");
  require(cfg.init == "coarse" || cfg.init == "random",
          "model: init must be 'coarse' or 'random'");
  long c = cfg.channels;
  enc_ = std::make_unique<Encoder>(ps, "enc.", cfg.encoder, rng);
  depth_w_ = ps.create("depth.w", {1, c, 1, 1}, init_fan_in(rng, c));
  depth_b_ = ps.create("depth.b", {1}, init_zeros());
  for (long l = 0; l < cfg.layers; ++l) {
    std::string p = "layers." + std::to_string(l) + ".";
    Layer layer;
    MVDFAConfig mc;
    mc.channels = c;
    mc.num_samples = cfg.num_samples;
    layer.mvdfa = std::make_unique<MVDFA>(ps, p + "mvdfa.", mc, rng);
    SESAConfig sc;
    sc.channels = c;
    sc.rate = cfg.sesa_rate;
    layer.sesa = std::make_unique<SESA>(ps, p + "sesa.", sc, rng);
    layer.ln1_g = ps.create(p + "ln1.g", {c}, init_const(1.0));
    layer.ln1_b = ps.create(p + "ln1.b", {c}, init_zeros());
    layer.ln2_g = ps.create(p + "ln2.g", {c}, init_const(1.0));
    layer.ln2_b = ps.create(p + "ln2.b", {c}, init_zeros());
    layer.ffn_w1 = ps.create(p + "ffn.w1", {c, cfg.ffn_hidden},
                             init_fan_in(rng, c));
    layer.ffn_b1 = ps.create(p + "ffn.b1", {cfg.ffn_hidden}, init_zeros());
    layer.ffn_w2 = ps.create(p + "ffn.w2", {cfg.ffn_hidden, c},
                             init_fan_in(rng, cfg.ffn_hidden));
    layer.ffn_b2 = ps.create(p + "ffn.b2", {c}, init_zeros());
    // zero-started delta head; the rotation delta bias is the identity
    // quaternion so its normalization has a usable gradient from step one
    layer.head_w = ps.create(p + "head.w", {c, 23}, init_zeros());
    layer.head_b = ps.create(p + "head.b", {23}, [](std::vector<double>& v) {
      for (double& x : v) x = 0.0;
      v[7] = 1.0;  // quaternion w
    });
    layers_.push_back(std::move(layer));
  }
}

std::pair<RawGaussianParams, Tensor> ReconModel::coarse_init(
    const std::vector<Tensor>& feats, const std::vector<Camera>& cams) const {
  long n = cfg_.n_gaussians;
  Vec3 center = scene_center(cams);
  std::vector<Tensor> mu_parts, q_parts;
  for (size_t i = 0; i < feats.size(); ++i) {
    const Tensor& f = feats[i];
    long hf = f.dim(1), wf = f.dim(2), p = hf * wf;
    const Camera& cam = cams[i];

    // one unit ray through the image-space center of every feature cell
    Mat3 kinv = cam.K.inverse();
    Mat3 rt = cam.w2c.rotation().transpose();
    Vec3 eye = cam.center();
    double sx = static_cast<double>(cam.width) / static_cast<double>(wf);
    double sy = static_cast<double>(cam.height) / static_cast<double>(hf);
    std::vector<double> rays(static_cast<size_t>(p * 3));
    for (long y = 0; y < hf; ++y)
      for (long x = 0; x < wf; ++x) {
        double px = (static_cast<double>(x) + 0.5) * sx - 0.5;
        double py = (static_cast<double>(y) + 0.5) * sy - 0.5;
        Vec3 d = rt * (kinv * Vec3{px, py, 1.0}).normalized();
        size_t at = static_cast<size_t>((y * wf + x) * 3);
        rays[at] = d.x;
        rays[at + 1] = d.y;
        rays[at + 2] = d.z;
      }
    Tensor ray_t = Tensor::from_data({p, 3}, rays);
    Tensor eye_t = Tensor::from_data({1, 3}, {eye.x, eye.y, eye.z});

    // depth as a per-view multiplier on the camera-to-scene distance
    double base = (center - eye).norm();
    require(base > 1e-9, "model: camera sits on the scene center");
    Tensor raw_d = op::conv2d(f, depth_w_, depth_b_, 1, 0);  // [1,hf,wf]
    Tensor mult = op::exp(op::clamp(raw_d, -3.0, 3.0));
    Tensor d = op::reshape(op::mul_scalar(mult, base), {p, 1});
    mu_parts.push_back(op::add(eye_t, op::mul(d, ray_t)));       // [p,3]
    q_parts.push_back(op::transpose2(op::reshape(f, {f.dim(0), p})));
  }
  Tensor mu_all = op::concat(mu_parts, 0);
  Tensor q_all = op::concat(q_parts, 0);
  long total = mu_all.dim(0);

  std::vector<long> pick;
  if (total >= n) {
    pick = farthest_point_sample(mu_all.detach(), n);
  } else {
    pick.reserve(static_cast<size_t>(n));
    for (long k = 0; k < n; ++k) pick.push_back(k % total);
  }
  RawGaussianParams g = make_raw_gaussians(n);
  g.mu = op::gather_rows(mu_all, pick);
  for (double& v : g.scale.data()) v = std::log(0.05);
  return {std::move(g), op::gather_rows(q_all, pick)};
}

ModelOutput ReconModel::forward(const Tensor& images,
                                const std::vector<Camera>& cams,
                                std::mt19937_64& rng) const {
  require(images.ndim() == 4 && images.dim(1) == 3,
          "model: images must be [I,3,H,W]");
  long views = images.dim(0);
  require(static_cast<size_t>(views) == cams.size(),
          "model: need one camera per image");
  for (const Camera& cam : cams) {
    cam.validate();
    require(cam.width == images.dim(3) && cam.height == images.dim(2),
            "model: camera size must match the images");
  }

  Tensor fused = enc_->forward(images);  // [I,C,H/4,W/4]
  std::vector<Tensor> feats;
  for (long i = 0; i < views; ++i) feats.push_back(op::select(fused, 0, i));

  RawGaussianParams raw;
  Tensor q;
  if (cfg_.init == "coarse") {
    auto init = coarse_init(feats, cams);
    raw = std::move(init.first);
    q = init.second;
  } else {
    raw = init_random_in_cov(cfg_.n_gaussians, cams, rng, cfg_.init_box_half);
    q = Tensor::zeros({cfg_.n_gaussians, cfg_.channels});
    std::normal_distribution<double> qd(0.0, 0.02);
    for (double& v : q.data()) v = qd(rng);
  }

  for (const Layer& layer : layers_) {
    Tensor q1 = cfg_.use_mvdfa
                    ? op::add(q, layer.mvdfa->forward(q, raw.mu, feats, cams))
                    : q;
    Tensor mixed =
        cfg_.use_sesa ? op::add(q1, layer.sesa->forward(q1, raw.mu)) : q1;
    Tensor q2 = op::layer_norm(mixed, layer.ln1_g, layer.ln1_b);
    Tensor h = op::relu(op::linear(q2, layer.ffn_w1, layer.ffn_b1));
    Tensor q3 = op::layer_norm(
        op::add(q2, op::linear(h, layer.ffn_w2, layer.ffn_b2)), layer.ln2_g,
        layer.ln2_b);
    Tensor delta = op::linear(q3, layer.head_w, layer.head_b);  // [N,23]
    GaussianDelta d;
    d.dmu = op::slice(delta, 1, 0, 3);
    d.dopacity = op::slice(delta, 1, 3, 1);
    d.dscale = op::slice(delta, 1, 4, 3);
    d.dquat = op::slice(delta, 1, 7, 4);
    d.dsh = op::slice(delta, 1, 11, 12);
    raw = apply_update(raw, d);
    q = q3;
  }
  ModelOutput out;
  out.raw = std::move(raw);
  out.queries = q;
  return out;
}

}  // namespace unigs
