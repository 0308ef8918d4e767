#pragma once

#include <functional>

#include "unigs/tensor.hpp"

namespace unigs {

// Optional perceptual term. When the hook is set, total = mse + lambda *
// hook(pred, target); the hook must return a taped scalar.
struct LossConfig {
  double lambda_perceptual = 1.0;
  std::function<Tensor(const Tensor&, const Tensor&)> perceptual;
};

Tensor mse_loss(const Tensor& pred, const Tensor& target);
Tensor total_loss(const Tensor& pred, const Tensor& target,
                  const LossConfig& cfg = {});

// Peak signal-to-noise for [0,1] images, capped at 99 dB below mse 1e-10.
double psnr(const Tensor& a, const Tensor& b);

// Mean SSIM over valid 11x11 windows (Gaussian weights, sigma 1.5) and
// channels. Inputs are [C,H,W] with H,W >= 11.
double ssim(const Tensor& a, const Tensor& b);

}  // namespace unigs
