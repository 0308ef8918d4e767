#include "unigs/camera.hpp"

#include <cmath>

namespace unigs {

void Camera::validate() const {
  require(width >= 2 && height >= 2, "Camera: image size must be at least 2x2");
  require(fx() > 0 && fy() > 0, "Camera: focal lengths must be positive");
  require(K(1, 0) == 0 && K(2, 0) == 0 && K(2, 1) == 0 && K(2, 2) == 1,
          "Camera: K must be upper triangular with K[2][2]=1");
  Mat3 R = w2c.rotation();
  Mat3 RtR = R.transpose() * R;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double want = i == j ? 1.0 : 0.0;
      require(std::fabs(RtR(i, j) - want) < 1e-6,
              "Camera: rotation is not orthonormal");
    }
  require(std::fabs(R.det() - 1.0) < 1e-6,
          "Camera: rotation determinant must be +1");
  require(w2c(3, 0) == 0 && w2c(3, 1) == 0 && w2c(3, 2) == 0 && w2c(3, 3) == 1,
          "Camera: extrinsic bottom row must be (0,0,0,1)");
}

Vec3 Camera::center() const {
  Mat3 Rt = w2c.rotation().transpose();
  Vec3 t = w2c.translation();
  return Rt * Vec3{-t.x, -t.y, -t.z};
}

Vec3 Camera::forward_world() const {
  Mat3 Rt = w2c.rotation().transpose();
  return Rt * Vec3{0, 0, 1};
}

Vec3 Camera::point_to_camera(const Vec3& p) const {
  return w2c.rotation() * p + w2c.translation();
}

Mat3 Camera::normalized_intrinsics() const {
  require(width >= 2 && height >= 2,
          "Camera: normalized intrinsics need at least a 2x2 image");
  double sx = 2.0 / static_cast<double>(width - 1);
  double sy = 2.0 / static_cast<double>(height - 1);
  Mat3 Kn;
  Kn.m = {fx() * sx, 0, cx() * sx - 1.0, 0, fy() * sy, cy() * sy - 1.0,
          0,         0, 1.0};
  return Kn;
}

std::array<double, 16> Camera::embedding_input() const {
  Mat3 Kn = normalized_intrinsics();
  Mat4 Kh = Mat4::identity();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) Kh(i, j) = Kn(i, j);
  Mat4 e = Kh * w2c;
  std::array<double, 16> out{};
  for (int i = 0; i < 16; ++i) out[static_cast<size_t>(i)] = e.m[static_cast<size_t>(i)];
  return out;
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Mat3& K,
                       long width, long height) {
  Vec3 f = (target - eye).normalized();
  Vec3 up{0, 1, 0};
  if (std::fabs(f.dot(up)) > 0.999) up = {1, 0, 0};
  Vec3 r = up.cross(f).normalized();
  Vec3 d = f.cross(r);
  Camera cam;
  cam.K = K;
  cam.width = width;
  cam.height = height;
  Mat3 R;
  R.m = {r.x, r.y, r.z, d.x, d.y, d.z, f.x, f.y, f.z};
  Vec3 t = R * Vec3{-eye.x, -eye.y, -eye.z};
  cam.w2c = Mat4::identity();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) cam.w2c(i, j) = R(i, j);
  cam.w2c(0, 3) = t.x;
  cam.w2c(1, 3) = t.y;
  cam.w2c(2, 3) = t.z;
  return cam;
}

ProjectedPoint project_point(const Camera& cam, const Vec3& p, double margin) {
  ProjectedPoint out;
  Vec3 pc = cam.point_to_camera(p);
  out.depth = pc.z;
  if (pc.z <= 1e-6) {
    out.u = out.v = -10.0;
    out.px = out.py = -10.0;
    out.valid = false;
    return out;
  }
  out.px = cam.fx() * pc.x / pc.z + cam.cx();
  out.py = cam.fy() * pc.y / pc.z + cam.cy();
  out.u = 2.0 * out.px / static_cast<double>(cam.width - 1) - 1.0;
  out.v = 2.0 * out.py / static_cast<double>(cam.height - 1) - 1.0;
  double lim = 1.0 - margin;
  out.valid = std::fabs(out.u) <= lim && std::fabs(out.v) <= lim;
  return out;
}

Tensor project_pinhole(const Tensor& mu, const Camera& cam,
                       std::vector<ProjectedPoint>* info) {
  require(mu.ndim() == 2 && mu.dim(1) == 3, "project_pinhole: mu must be [N,3]");
  long n = mu.dim(0);
  Tensor out = Tensor::zeros({n, 2}, tracing(mu));
  const double* md = mu.data().data();
  double* od = out.data().data();
  if (info) info->assign(static_cast<size_t>(n), ProjectedPoint{});
  for (long i = 0; i < n; ++i) {
    Vec3 p{md[3 * i], md[3 * i + 1], md[3 * i + 2]};
    ProjectedPoint pp = project_point(cam, p);
    if (pp.depth <= 1e-6) {
      od[2 * i] = od[2 * i + 1] = -10.0;
    } else {
      od[2 * i] = pp.u;
      od[2 * i + 1] = pp.v;
    }
    if (info) (*info)[static_cast<size_t>(i)] = pp;
  }
  round_to_storage(out.data());
  if (out.requires_grad()) {
    auto mn = mu.node_ptr();
    auto on = out.node_ptr();
    Camera c = cam;
    active_tape()->record([mn, on, n, c]() {
      if (on->grad.empty()) return;
      const double* go = on->grad.data();
      const double* md = mn->data.data();
      double* gm = mn->ensure_grad().data();
      Mat3 R = c.w2c.rotation();
      double su = 2.0 / static_cast<double>(c.width - 1);
      double sv = 2.0 / static_cast<double>(c.height - 1);
      for (long i = 0; i < n; ++i) {
        Vec3 p{md[3 * i], md[3 * i + 1], md[3 * i + 2]};
        Vec3 pc = c.point_to_camera(p);
        if (pc.z <= 1e-6) continue;
        double gu = go[2 * i], gv = go[2 * i + 1];
        if (gu == 0.0 && gv == 0.0) continue;
        double z2 = pc.z * pc.z;
        for (int j = 0; j < 3; ++j) {
          double dudj = su * c.fx() * (R(0, j) * pc.z - pc.x * R(2, j)) / z2;
          double dvdj = sv * c.fy() * (R(1, j) * pc.z - pc.y * R(2, j)) / z2;
          gm[3 * i + j] += gu * dudj + gv * dvdj;
        }
      }
    });
  }
  return out;
}

std::vector<Camera> normalize_to_reference(const std::vector<Camera>& cams) {
  require(!cams.empty(), "normalize_to_reference: no cameras");
  Mat4 ref_inv = cams[0].w2c.inverse();
  std::vector<Camera> out = cams;
  for (Camera& c : out) c.w2c = c.w2c * ref_inv;
  return out;
}

Vec3 scene_center(const std::vector<Camera>& cams) {
  require(!cams.empty(), "scene_center: no cameras");
  Mat3 A{};
  Vec3 b{};
  for (const Camera& c : cams) {
    Vec3 o = c.center();
    Vec3 d = c.forward_world().normalized();
    // accumulate (I - d d^T)
    Mat3 P;
    P.m = {1 - d.x * d.x, -d.x * d.y,    -d.x * d.z,
           -d.y * d.x,    1 - d.y * d.y, -d.y * d.z,
           -d.z * d.x,    -d.z * d.y,    1 - d.z * d.z};
    for (int i = 0; i < 9; ++i) A.m[static_cast<size_t>(i)] += P.m[static_cast<size_t>(i)];
    Vec3 Po = P * o;
    b = b + Po;
  }
  if (cams.size() >= 2 && std::fabs(A.det()) > 1e-9) {
    return A.inverse() * b;
  }
  Vec3 mean_c{}, mean_d{};
  for (const Camera& c : cams) {
    mean_c = mean_c + c.center();
    mean_d = mean_d + c.forward_world();
  }
  double inv = 1.0 / static_cast<double>(cams.size());
  mean_c = mean_c * inv;
  mean_d = (mean_d * inv).normalized();
  return mean_c + mean_d * 2.0;
}

bool in_cone_of_vision(const Vec3& p, const std::vector<Camera>& cams,
                       double margin) {
  require(!cams.empty(), "in_cone_of_vision: no cameras");
  for (const Camera& c : cams)
    if (!project_point(c, p, margin).valid) return false;
  return true;
}

}  // namespace unigs
