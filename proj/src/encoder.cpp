#include "unigs/encoder.hpp"

#include <cmath>

#include "unigs/ops.hpp"

namespace unigs {

namespace op = ops;

Encoder::Encoder(ParamStore& ps, std::string prefix, EncoderConfig cfg,
                 std::mt19937_64& rng)
    : ps_(&ps), pre_(std::move(prefix)), cfg_(cfg) {
  auto conv = [&](const std::string& name, long cout, long cin) {
    ps_->create(pre_ + name + ".w", {cout, cin, 3, 3},
                init_fan_in(rng, cin * 9));
    ps_->create(pre_ + name + ".b", {cout}, init_zeros());
  };
  conv("stem", cfg_.base_channels, 3);
  conv("down1", cfg_.base_channels, cfg_.base_channels);
  conv("down2", cfg_.mid_channels, cfg_.base_channels);
  conv("down3", cfg_.out_channels, cfg_.mid_channels);
  conv("fuse", cfg_.out_channels, cfg_.mid_channels + cfg_.out_channels);
  long C = cfg_.out_channels;
  ps_->create(pre_ + "xview.wq", {C, C}, init_fan_in(rng, C));
  ps_->create(pre_ + "xview.wk", {C, C}, init_fan_in(rng, C));
  ps_->create(pre_ + "xview.wv", {C, C}, init_fan_in(rng, C));
  ps_->create(pre_ + "xview.bv", {C}, init_zeros());
  ps_->create(pre_ + "xview.wo", {C, C}, init_fan_in(rng, C));
  ps_->create(pre_ + "xview.bo", {C}, init_zeros());
}

Tensor Encoder::view_features(const Tensor& image) const {
  require(image.ndim() == 3 && image.dim(0) == 3,
          "Encoder: view must be [3,H,W]");
  long H = image.dim(1), W = image.dim(2);
  require(H % 4 == 0 && W % 4 == 0 && H >= 8 && W >= 8,
          "Encoder: image size must be a multiple of 4, at least 8");
  auto conv = [&](const Tensor& x, const std::string& name, long stride) {
    return op::conv2d(x, ps_->at(pre_ + name + ".w"),
                      ps_->at(pre_ + name + ".b"), stride, 1);
  };
  Tensor s = op::relu(conv(image, "stem", 1));      // [base,H,W]
  Tensor d1 = op::relu(conv(s, "down1", 2));        // [base,H/2,W/2]
  Tensor d2 = op::relu(conv(d1, "down2", 2));       // [mid,H/4,W/4]
  Tensor d3 = op::relu(conv(d2, "down3", 2));       // [C,H/8,W/8]
  Tensor up = op::upsample_nearest(d3, H / 4, W / 4);
  Tensor cat = op::concat({d2, up}, 0);             // [mid+C,H/4,W/4]
  return conv(cat, "fuse", 1);                      // signed features
}

Tensor Encoder::attend_tokens(const Tensor& tokens) const {
  long C = cfg_.out_channels;
  Tensor q = op::linear(tokens, ps_->at(pre_ + "xview.wq"), Tensor());
  Tensor k = op::linear(tokens, ps_->at(pre_ + "xview.wk"), Tensor());
  Tensor v = op::linear(tokens, ps_->at(pre_ + "xview.wv"),
                        ps_->at(pre_ + "xview.bv"));
  Tensor scores = op::mul_scalar(op::matmul_nt(q, k),
                                 1.0 / std::sqrt(static_cast<double>(C)));
  Tensor attn = op::softmax(scores, -1);
  Tensor mixed = op::matmul(attn, v);
  Tensor proj = op::linear(mixed, ps_->at(pre_ + "xview.wo"),
                           ps_->at(pre_ + "xview.bo"));
  return op::add(tokens, proj);
}

Tensor Encoder::cross_view(const Tensor& feats) const {
  require(feats.ndim() == 4 && feats.dim(1) == cfg_.out_channels,
          "Encoder: cross_view expects [I,C,H',W']");
  long I = feats.dim(0);
  if (I == 1) return feats;  // single view: attention is inert
  long C = feats.dim(1), Hp = feats.dim(2), Wp = feats.dim(3);
  long P = Hp * Wp;

  // tokens [I*P, C], view-major
  std::vector<Tensor> view_tokens;
  for (long i = 0; i < I; ++i) {
    Tensor f = op::select(feats, 0, i);             // [C,H',W']
    Tensor flat = op::reshape(f, {C, P});
    view_tokens.push_back(op::transpose2(flat));    // [P,C]
  }
  Tensor X = op::concat(view_tokens, 0);            // [I*P,C]

  auto windowed_pass = [&](const Tensor& tokens, long shift) {
    long ws = cfg_.window;
    std::vector<long> order;   // concat order of tokens
    order.reserve(static_cast<size_t>(I * P));
    std::vector<Tensor> blocks;
    for (long wy = 0; wy < Hp; wy += ws)
      for (long wx = 0; wx < Wp; wx += ws) {
        std::vector<long> idx;
        idx.reserve(static_cast<size_t>(I * ws * ws));
        for (long v = 0; v < I; ++v)
          for (long y = wy; y < wy + ws; ++y)
            for (long x = wx; x < wx + ws; ++x) {
              long sy = (y + shift) % Hp;
              long sx = (x + shift) % Wp;
              idx.push_back(v * P + sy * Wp + sx);
            }
        blocks.push_back(attend_tokens(op::gather_rows(tokens, idx)));
        order.insert(order.end(), idx.begin(), idx.end());
      }
    Tensor cat = op::concat(blocks, 0);
    // inverse permutation: token t -> its slot in the concat
    std::vector<long> inv(static_cast<size_t>(I * P));
    for (size_t slot = 0; slot < order.size(); ++slot)
      inv[static_cast<size_t>(order[slot])] = static_cast<long>(slot);
    return op::gather_rows(cat, inv);
  };

  Tensor Y;
  if (P <= 64) {
    Y = attend_tokens(X);  // whole map fits one attention group
  } else {
    require(Hp % cfg_.window == 0 && Wp % cfg_.window == 0,
            "Encoder: feature map is not divisible by the attention window");
    Y = windowed_pass(X, 0);
    Y = windowed_pass(Y, cfg_.window / 2);  // mix across window borders
  }

  std::vector<Tensor> outs;
  for (long i = 0; i < I; ++i) {
    Tensor rows = op::slice(Y, 0, i * P, P);        // [P,C]
    Tensor back = op::transpose2(rows);             // [C,P]
    outs.push_back(op::reshape(back, {1, C, Hp, Wp}));
  }
  return op::concat(outs, 0);
}

Tensor Encoder::forward(const Tensor& images) const {
  require(images.ndim() == 4 && images.dim(1) == 3,
          "Encoder: images must be [I,3,H,W]");
  long I = images.dim(0);
  require(I >= 1, "Encoder: need at least one view");
  std::vector<Tensor> feats;
  for (long i = 0; i < I; ++i) {
    Tensor f = view_features(op::select(images, 0, i));
    feats.push_back(op::reshape(f, {1, cfg_.out_channels, f.dim(1), f.dim(2)}));
  }
  return cross_view(op::concat(feats, 0));
}

}  // namespace unigs
