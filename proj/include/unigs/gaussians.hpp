#pragma once

#include <array>
#include <string>

#include "unigs/mat.hpp"
#include "unigs/tensor.hpp"

namespace unigs {

// Unconstrained parameters as optimized and serialized. Opacity is a logit,
// scale is log-space, rotation is an unnormalized quaternion (w,x,y,z).
struct RawGaussianParams {
  Tensor mu;        // [N,3]
  Tensor opacity;   // [N,1]
  Tensor scale;     // [N,3]
  Tensor rotation;  // [N,4]
  Tensor sh;        // [N,12] channel-major: R0..R3, G0..G3, B0..B3

  long count() const { return mu.defined() ? mu.dim(0) : 0; }
  void set_requires_grad(bool rg);
  std::vector<Tensor> tensors();
};

RawGaussianParams make_raw_gaussians(long n);

// Activated representation fed to the renderer: opacity in (0,1), positive
// scales, unit quaternions.
struct GaussianSet {
  Tensor mu;        // [N,3]
  Tensor opacity;   // [N,1]
  Tensor scale;     // [N,3]
  Tensor rotation;  // [N,4] unit
  Tensor sh;        // [N,12]

  long count() const { return mu.defined() ? mu.dim(0) : 0; }
  void validate() const;
};

// sigmoid / exp(clamped log) / quat normalize; mu and sh pass through.
// Log-scales are clamped to [-10,3] before exp so a runaway step cannot
// produce degenerate covariances.
GaussianSet activate_params(const RawGaussianParams& raw);

// Per-layer refinement deltas, all additive except rotation which composes
// by quaternion multiplication: q' = normalize(dquat) * q.
struct GaussianDelta {
  Tensor dmu;       // [N,3]
  Tensor dopacity;  // [N,1]
  Tensor dscale;    // [N,3]
  Tensor dquat;     // [N,4] unnormalized
  Tensor dsh;       // [N,12]
};

RawGaussianParams apply_update(const RawGaussianParams& g,
                               const GaussianDelta& d);

Mat3 rotation_from_quat(const std::array<double, 4>& q);  // expects unit

// Sigma = R diag(s^2) R^T. Quaternion must be unit within 1e-3 and scales
// strictly positive.
Mat3 build_covariance(const std::array<double, 4>& quat, const Vec3& scale);

// Degree-1 SH. dir must be non-zero (normalized by convention). Affine in
// the coefficients; result clamped to [0,1] per channel.
std::array<double, 3> eval_sh(const double* sh12, const Vec3& dir);
std::array<double, 3> eval_sh_raw(const double* sh12, const Vec3& dir);

inline constexpr double kShC0 = 0.28209479177387814;
inline constexpr double kShC1 = 0.4886025119029199;

void save_ply(const std::string& path, const RawGaussianParams& g);
RawGaussianParams load_ply(const std::string& path);

}  // namespace unigs
