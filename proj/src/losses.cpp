#include "unigs/losses.hpp"

#include <cmath>

#include "unigs/ops.hpp"

namespace unigs {

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  require(pred.shape() == target.shape(),
          "mse_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
              shape_str(target.shape()));
  Tensor d = ops::sub(pred, target);
  return ops::mean(ops::mul(d, d));
}

Tensor total_loss(const Tensor& pred, const Tensor& target,
                  const LossConfig& cfg) {
  Tensor l = mse_loss(pred, target);
  if (cfg.perceptual) {
    Tensor p = cfg.perceptual(pred, target);
    require(p.numel() == 1, "total_loss: perceptual hook must return a scalar");
    l = ops::add(l, ops::mul_scalar(p, cfg.lambda_perceptual));
  }
  return l;
}

double psnr(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "psnr: shape mismatch");
  double acc = 0.0;
  for (long i = 0; i < a.numel(); ++i) {
    double d = a.data()[static_cast<size_t>(i)] - b.data()[static_cast<size_t>(i)];
    acc += d * d;
  }
  double mse = acc / static_cast<double>(a.numel());
  if (mse < 1e-10) return 99.0;
  return std::min(99.0, -10.0 * std::log10(mse));
}

double ssim(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "ssim: shape mismatch");
  require(a.ndim() == 3, "ssim: inputs must be [C,H,W]");
  long C = a.dim(0), H = a.dim(1), W = a.dim(2);
  constexpr long kWin = 11;
  require(H >= kWin && W >= kWin,
          "ssim: image smaller than the 11x11 window");
  // normalized gaussian window, sigma 1.5
  double w[kWin];
  double wsum = 0.0;
  for (long i = 0; i < kWin; ++i) {
    double d = static_cast<double>(i) - 5.0;
    w[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    wsum += w[i];
  }
  for (double& v : w) v /= wsum;
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;
  double acc = 0.0;
  long count = 0;
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  for (long c = 0; c < C; ++c) {
    const double* ac = ad + c * H * W;
    const double* bc = bd + c * H * W;
    for (long y = 0; y + kWin <= H; ++y)
      for (long x = 0; x + kWin <= W; ++x) {
        double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
        for (long i = 0; i < kWin; ++i)
          for (long j = 0; j < kWin; ++j) {
            double wij = w[i] * w[j];
            double av = ac[(y + i) * W + x + j];
            double bv = bc[(y + i) * W + x + j];
            mx += wij * av;
            my += wij * bv;
            xx += wij * av * av;
            yy += wij * bv * bv;
            xy += wij * av * bv;
          }
        double vx = xx - mx * mx;
        double vy = yy - my * my;
        double cov = xy - mx * my;
        double s = ((2 * mx * my + kC1) * (2 * cov + kC2)) /
                   ((mx * mx + my * my + kC1) * (vx + vy + kC2));
        acc += s;
        ++count;
      }
  }
  return acc / static_cast<double>(count);
}

}  // namespace unigs
