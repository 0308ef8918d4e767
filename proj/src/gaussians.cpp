#include "unigs/gaussians.hpp"

#include <cmath>

#include "unigs/ops.hpp"

namespace unigs {

void RawGaussianParams::set_requires_grad(bool rg) {
  mu.set_requires_grad(rg);
  opacity.set_requires_grad(rg);
  scale.set_requires_grad(rg);
  rotation.set_requires_grad(rg);
  sh.set_requires_grad(rg);
}

std::vector<Tensor> RawGaussianParams::tensors() {
  return {mu, opacity, scale, rotation, sh};
}

RawGaussianParams make_raw_gaussians(long n) {
  RawGaussianParams g;
  g.mu = Tensor::zeros({n, 3});
  g.opacity = Tensor::zeros({n, 1});
  g.scale = Tensor::zeros({n, 3});
  g.rotation = Tensor::zeros({n, 4});
  for (long i = 0; i < n; ++i) g.rotation.data()[static_cast<size_t>(4 * i)] = 1.0;
  g.sh = Tensor::zeros({n, 12});
  return g;
}

void GaussianSet::validate() const {
  long n = count();
  require(mu.ndim() == 2 && mu.dim(1) == 3, "GaussianSet: mu must be [N,3]");
  require(opacity.ndim() == 2 && opacity.dim(0) == n && opacity.dim(1) == 1,
          "GaussianSet: opacity must be [N,1]");
  require(scale.ndim() == 2 && scale.dim(0) == n && scale.dim(1) == 3,
          "GaussianSet: scale must be [N,3]");
  require(rotation.ndim() == 2 && rotation.dim(0) == n && rotation.dim(1) == 4,
          "GaussianSet: rotation must be [N,4]");
  require(sh.ndim() == 2 && sh.dim(0) == n && sh.dim(1) == 12,
          "GaussianSet: sh must be [N,12]");
  for (double v : opacity.data())
    require(v > 0.0 && v < 1.0, "GaussianSet: opacity outside (0,1)");
  for (double v : scale.data())
    require(v > 0.0 && std::isfinite(v), "GaussianSet: non-positive scale");
  const auto& q = rotation.data();
  for (long i = 0; i < n; ++i) {
    double s = 0;
    for (int k = 0; k < 4; ++k) {
      double v = q[static_cast<size_t>(4 * i + k)];
      s += v * v;
    }
    require(std::fabs(std::sqrt(s) - 1.0) < 1e-6,
            "GaussianSet: rotation row " + std::to_string(i) +
                " is not a unit quaternion");
  }
  for (double v : mu.data()) require(std::isfinite(v), "GaussianSet: non-finite mu");
  for (double v : sh.data()) require(std::isfinite(v), "GaussianSet: non-finite sh");
}

GaussianSet activate_params(const RawGaussianParams& raw) {
  GaussianSet g;
  g.mu = raw.mu;
  g.opacity = ops::sigmoid(raw.opacity);
  g.scale = ops::exp(ops::clamp(raw.scale, -10.0, 3.0));
  g.rotation = ops::quat_normalize(raw.rotation);
  g.sh = raw.sh;
  return g;
}

RawGaussianParams apply_update(const RawGaussianParams& g,
                               const GaussianDelta& d) {
  RawGaussianParams out;
  out.mu = ops::add(g.mu, d.dmu);
  out.opacity = ops::add(g.opacity, d.dopacity);
  out.scale = ops::add(g.scale, d.dscale);
  out.rotation = ops::quat_multiply(ops::quat_normalize(d.dquat), g.rotation);
  out.sh = ops::add(g.sh, d.dsh);
  return out;
}

Mat3 rotation_from_quat(const std::array<double, 4>& q) {
  double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 R;
  R.m = {1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)};
  return R;
}

Mat3 build_covariance(const std::array<double, 4>& quat, const Vec3& scale) {
  double n = std::sqrt(quat[0] * quat[0] + quat[1] * quat[1] +
                       quat[2] * quat[2] + quat[3] * quat[3]);
  require(std::fabs(n - 1.0) <= 1e-3, "build_covariance: quaternion not unit");
  require(scale.x > 0 && scale.y > 0 && scale.z > 0,
          "build_covariance: scales must be positive");
  Mat3 R = rotation_from_quat(quat);
  Mat3 S2{};
  S2(0, 0) = scale.x * scale.x;
  S2(1, 1) = scale.y * scale.y;
  S2(2, 2) = scale.z * scale.z;
  return R * S2 * R.transpose();
}

std::array<double, 3> eval_sh_raw(const double* sh12, const Vec3& dir) {
  require(dir.norm() > 1e-12, "eval_sh: zero-length direction");
  std::array<double, 3> rgb{};
  for (int ch = 0; ch < 3; ++ch) {
    const double* c = sh12 + 4 * ch;
    rgb[static_cast<size_t>(ch)] =
        0.5 + kShC0 * c[0] +
        kShC1 * (-c[1] * dir.y + c[2] * dir.z - c[3] * dir.x);
  }
  return rgb;
}

std::array<double, 3> eval_sh(const double* sh12, const Vec3& dir) {
  std::array<double, 3> rgb = eval_sh_raw(sh12, dir);
  for (double& v : rgb) v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  return rgb;
}

}  // namespace unigs
