#include "unigs/mvdfa.hpp"

#include <cmath>

#include "unigs/ops.hpp"

namespace unigs {

namespace op = ops;

MVDFA::MVDFA(ParamStore& ps, const std::string& prefix, const MVDFAConfig& cfg,
             std::mt19937_64& rng)
    : cfg_(cfg) {
  require(cfg.channels > 0 && cfg.num_samples > 0,
          "mvdfa: channels and num_samples must be positive");
  long c = cfg.channels, ns = cfg.num_samples;
  ln_g_ = ps.create(prefix + "ln.g", {c}, init_const(1.0));
  ln_b_ = ps.create(prefix + "ln.b", {c}, init_zeros());
  cam_w1_ = ps.create(prefix + "cam.w1", {16, c}, init_fan_in(rng, 16));
  cam_b1_ = ps.create(prefix + "cam.b1", {c}, init_zeros());
  // zero-init so modulation starts as the identity on ln(Q)
  cam_w2_ = ps.create(prefix + "cam.w2", {c, 2 * c}, init_zeros());
  cam_b2_ = ps.create(prefix + "cam.b2", {2 * c}, init_zeros());
  off_w_ = ps.create(prefix + "offset.w", {c, ns * 2}, init_zeros());
  off_b_ = ps.create(prefix + "offset.b", {ns * 2}, [&cfg](std::vector<double>& v) {
    // initial samples sit on a small ring around the projected center
    constexpr double kTau = 6.283185307179586;
    long n = static_cast<long>(v.size()) / 2;
    for (long s = 0; s < n; ++s) {
      double th = kTau * static_cast<double>(s) / static_cast<double>(n);
      v[static_cast<size_t>(2 * s)] = cfg.offset_radius * std::cos(th);
      v[static_cast<size_t>(2 * s + 1)] = cfg.offset_radius * std::sin(th);
    }
  });
  score_w_ = ps.create(prefix + "score.w", {c, ns}, init_zeros());
  score_b_ = ps.create(prefix + "score.b", {ns}, init_zeros());
  value_w_ = ps.create(prefix + "value.w", {c, c}, init_fan_in(rng, c));
  fuse_w_ = ps.create(prefix + "fuse.w", {c, c}, init_fan_in(rng, c));
  fuse_b_ = ps.create(prefix + "fuse.b", {c}, init_zeros());
}

Tensor MVDFA::modulated_queries(const Tensor& queries, const Camera& cam) const {
  long c = cfg_.channels;
  auto emb = cam.embedding_input();
  Tensor e = Tensor::from_data({1, 16},
                              std::vector<double>(emb.begin(), emb.end()));
  Tensor h = op::relu(op::linear(e, cam_w1_, cam_b1_));
  Tensor mod = op::linear(h, cam_w2_, cam_b2_);  // [1,2C]
  Tensor scale = op::slice(mod, 1, 0, c);
  Tensor shift = op::slice(mod, 1, c, c);
  Tensor qn = op::layer_norm(queries, ln_g_, ln_b_);
  return op::add(op::mul(qn, op::add_scalar(scale, 1.0)), shift);
}

Tensor MVDFA::forward(const Tensor& queries, const Tensor& centers,
                      const std::vector<Tensor>& feats,
                      const std::vector<Camera>& cams) const {
  require(queries.ndim() == 2 && queries.dim(1) == cfg_.channels,
          "mvdfa: queries must be [N,C]");
  long n = queries.dim(0);
  require(centers.ndim() == 2 && centers.dim(0) == n && centers.dim(1) == 3,
          "mvdfa: centers must be [N,3]");
  require(!feats.empty() && feats.size() == cams.size(),
          "mvdfa: need one feature map per camera");
  for (const Tensor& f : feats)
    require(f.ndim() == 3 && f.dim(0) == cfg_.channels,
            "mvdfa: feature maps must be [C,Hf,Wf]");

  long ns = cfg_.num_samples;
  last_scores_.clear();
  std::vector<Tensor> gated;
  gated.reserve(feats.size());
  for (size_t i = 0; i < feats.size(); ++i) {
    Tensor q = modulated_queries(queries, cams[i]);  // [N,C]
    Tensor offs = op::reshape(op::linear(q, off_w_, off_b_), {n, ns, 2});
    Tensor alpha = op::softmax(op::linear(q, score_w_, score_b_), 1);
    last_scores_.push_back(alpha.detach());
    Tensor uv = project_pinhole(centers, cams[i]);  // [N,2], behind -> far outside
    Tensor pts = op::add(op::reshape(uv, {n, 1, 2}), offs);
    Tensor sampled = op::grid_sample(feats[i], pts);  // [N,Ns,C]
    Tensor pooled =
        op::sum_axis(op::mul(sampled, op::reshape(alpha, {n, ns, 1})), 1);
    Tensor value = op::linear(pooled, value_w_, Tensor());  // [N,C]
    Tensor gate = op::sigmoid(op::linear(q, fuse_w_, fuse_b_));
    gated.push_back(op::reshape(op::mul(gate, value), {1, n, cfg_.channels}));
  }
  return op::sum_ordered_axis0(op::concat(gated, 0));
}

}  // namespace unigs
