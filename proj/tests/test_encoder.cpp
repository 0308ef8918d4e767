#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>

#include "doctest.h"
#include "unigs/encoder.hpp"
#include "unigs/gradcheck.hpp"
#include "unigs/ops.hpp"

using namespace unigs;
namespace op = unigs::ops;

namespace {

Tensor rand_images(long I, long H, long W, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(0.0, 1.0);
  Tensor t = Tensor::zeros({I, 3, H, W});
  for (double& v : t.data()) v = d(rng);
  return t;
}

}  // namespace

TEST_CASE("encoder output shapes and determinism") {
  ParamStore ps;
  std::mt19937_64 rng(1);
  EncoderConfig cfg;
  cfg.base_channels = 8;
  cfg.mid_channels = 12;
  cfg.out_channels = 16;
  Encoder enc(ps, "enc.", cfg, rng);

  std::mt19937_64 img_rng(2);
  Tensor imgs = rand_images(4, 32, 32, img_rng);
  Tensor f = enc.forward(imgs);
  CHECK(f.shape() == Shape{4, 16, 8, 8});

  Tensor f2 = enc.forward(imgs);
  for (long i = 0; i < f.numel(); ++i)
    CHECK(f.data()[static_cast<size_t>(i)] == f2.data()[static_cast<size_t>(i)]);

  // non multiple-of-4 sizes are rejected
  Tensor bad = Tensor::zeros({1, 3, 30, 32});
  CHECK_THROWS_AS(enc.forward(bad), ContractError);
  CHECK_THROWS_AS(enc.forward(Tensor::zeros({2, 1, 32, 32})), ContractError);

  // smallest legal input
  Tensor tiny = rand_images(2, 8, 8, img_rng);
  CHECK(enc.forward(tiny).shape() == Shape{2, 16, 2, 2});
}

TEST_CASE("single view skips cross-view mixing") {
  ParamStore ps;
  std::mt19937_64 rng(3);
  EncoderConfig cfg;
  cfg.base_channels = 6;
  cfg.mid_channels = 8;
  cfg.out_channels = 10;
  Encoder enc(ps, "enc.", cfg, rng);
  std::mt19937_64 img_rng(4);
  Tensor img = rand_images(1, 16, 16, img_rng);
  Tensor through = enc.forward(img);
  Tensor direct = enc.view_features(op::select(img, 0, 0));
  CHECK(through.shape() == Shape{1, 10, 4, 4});
  for (long i = 0; i < direct.numel(); ++i)
    CHECK(through.data()[static_cast<size_t>(i)] ==
          direct.data()[static_cast<size_t>(i)]);
}

TEST_CASE("multi view attention changes features and single view is unaffected") {
  ParamStore ps;
  std::mt19937_64 rng(5);
  EncoderConfig cfg;
  cfg.base_channels = 6;
  cfg.mid_channels = 8;
  cfg.out_channels = 10;
  Encoder enc(ps, "enc.", cfg, rng);
  std::mt19937_64 img_rng(6);
  Tensor imgs = rand_images(2, 16, 16, img_rng);
  Tensor fused = enc.forward(imgs);
  Tensor solo = enc.view_features(op::select(imgs, 0, 0));
  bool differs = false;
  for (long i = 0; i < solo.numel() && !differs; ++i)
    differs = fused.data()[static_cast<size_t>(i)] !=
              solo.data()[static_cast<size_t>(i)];
  CHECK(differs);
}

TEST_CASE("zeroed attention weights reduce to a bias shift") {
  ParamStore ps;
  std::mt19937_64 rng(7);
  EncoderConfig cfg;
  cfg.base_channels = 4;
  cfg.mid_channels = 6;
  cfg.out_channels = 8;
  Encoder enc(ps, "enc.", cfg, rng);
  for (const char* n : {"enc.xview.wq", "enc.xview.wk", "enc.xview.wv",
                        "enc.xview.wo"})
    for (double& v : ps.at(n).data()) v = 0.0;
  Tensor bo = ps.at("enc.xview.bo");
  for (long c = 0; c < 8; ++c) bo.data()[static_cast<size_t>(c)] = 0.1 * static_cast<double>(c);

  std::mt19937_64 img_rng(8);
  Tensor imgs = rand_images(3, 16, 16, img_rng);
  std::vector<Tensor> per_view;
  for (long i = 0; i < 3; ++i)
    per_view.push_back(enc.view_features(op::select(imgs, 0, i)));
  Tensor fused = enc.forward(imgs);
  for (long i = 0; i < 3; ++i)
    for (long c = 0; c < 8; ++c)
      for (long p = 0; p < 16; ++p) {
        double want = per_view[static_cast<size_t>(i)]
                          .data()[static_cast<size_t>(c * 16 + p)] +
                      0.1 * static_cast<double>(c);
        CHECK(fused.at({i, c, p / 4, p % 4}) ==
              doctest::Approx(want).epsilon(1e-12));
      }
}

TEST_CASE("cross-view attention is equivariant to view order") {
  ParamStore ps;
  std::mt19937_64 rng(9);
  EncoderConfig cfg;
  cfg.base_channels = 4;
  cfg.mid_channels = 6;
  cfg.out_channels = 8;
  Encoder enc(ps, "enc.", cfg, rng);
  std::mt19937_64 img_rng(10);
  Tensor imgs = rand_images(3, 16, 16, img_rng);
  Tensor f = enc.forward(imgs);

  // reversed view order
  std::vector<Tensor> rev;
  for (long i = 2; i >= 0; --i)
    rev.push_back(op::reshape(op::select(imgs, 0, i), {1, 3, 16, 16}));
  Tensor f_rev = enc.forward(op::concat(rev, 0));
  for (long i = 0; i < 3; ++i)
    for (long c = 0; c < 8; ++c)
      for (long y = 0; y < 4; ++y)
        for (long x = 0; x < 4; ++x)
          CHECK(f_rev.at({2 - i, c, y, x}) ==
                doctest::Approx(f.at({i, c, y, x})).epsilon(1e-10));
}

TEST_CASE("windowed path with shift matches shapes and stays deterministic") {
  ParamStore ps;
  std::mt19937_64 rng(11);
  EncoderConfig cfg;
  cfg.base_channels = 4;
  cfg.mid_channels = 4;
  cfg.out_channels = 6;
  cfg.window = 8;
  Encoder enc(ps, "enc.", cfg, rng);
  std::mt19937_64 img_rng(12);
  // 64x64 -> 16x16 feature map, 256 tokens per view: windowed branch
  Tensor imgs = rand_images(2, 64, 64, img_rng);
  Tensor f = enc.forward(imgs);
  CHECK(f.shape() == Shape{2, 6, 16, 16});
  Tensor g = enc.forward(imgs);
  for (long i = 0; i < f.numel(); ++i)
    CHECK(f.data()[static_cast<size_t>(i)] == g.data()[static_cast<size_t>(i)]);

  // view equivariance holds through windows and the shifted pass
  std::vector<Tensor> rev;
  for (long i = 1; i >= 0; --i)
    rev.push_back(op::reshape(op::select(imgs, 0, i), {1, 3, 64, 64}));
  Tensor fr = enc.forward(op::concat(rev, 0));
  double worst = 0;
  for (long c = 0; c < 6; ++c)
    for (long y = 0; y < 16; ++y)
      for (long x = 0; x < 16; ++x) {
        worst = std::max(worst, std::fabs(fr.at({1, c, y, x}) - f.at({0, c, y, x})));
        worst = std::max(worst, std::fabs(fr.at({0, c, y, x}) - f.at({1, c, y, x})));
      }
  CHECK(worst < 1e-10);
}

TEST_CASE("encoder gradients reach every parameter group") {
  ParamStore ps;
  std::mt19937_64 rng(13);
  EncoderConfig cfg;
  cfg.base_channels = 4;
  cfg.mid_channels = 5;
  cfg.out_channels = 6;
  Encoder enc(ps, "enc.", cfg, rng);
  std::mt19937_64 img_rng(14);
  Tensor imgs = rand_images(2, 8, 8, img_rng);
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor f = enc.forward(imgs);
    Tensor loss = op::sum(op::mul(f, f));
    tape.backward(loss);
  }
  for (const std::string& name : ps.names()) {
    auto g = ps.at(name).grad();
    bool any = false;
    for (double v : g) any = any || v != 0.0;
    INFO(name);
    CHECK(any);
  }
}

TEST_CASE("encoder finite-difference spot check") {
  ParamStore ps;
  std::mt19937_64 rng(15);
  EncoderConfig cfg;
  cfg.base_channels = 3;
  cfg.mid_channels = 4;
  cfg.out_channels = 4;
  Encoder enc(ps, "enc.", cfg, rng);
  std::mt19937_64 img_rng(16);
  Tensor imgs = rand_images(2, 8, 8, img_rng);
  // check a conv weight, an attention weight, and the input image
  GradCheckOpts o;
  o.max_entries = 8;
  o.tol = 1e-4;  // relu kinks are avoided by the random draw, conv sums are long
  auto f = [&](const std::vector<Tensor>& in) {
    (void)in;
    Tensor out = enc.forward(imgs);
    return op::mean(op::mul(out, out));
  };
  auto rep = grad_check(
      [&](const std::vector<Tensor>& in) {
        (void)in;
        return f(in);
      },
      {ps.at("enc.stem.w"), ps.at("enc.xview.wq"), ps.at("enc.fuse.b")}, o);
  INFO(rep.worst);
  CHECK(rep.pass);
}
