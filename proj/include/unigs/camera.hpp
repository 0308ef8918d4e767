#pragma once

#include <array>
#include <vector>

#include "unigs/mat.hpp"
#include "unigs/tensor.hpp"

namespace unigs {

// Pinhole camera. K is in pixel units, w2c maps world points into the
// camera frame (x right, y along image rows, z forward). Pixel centers sit
// at integer coordinates; normalized image coords put (-1,-1) at pixel
// (0,0) and (1,1) at pixel (W-1,H-1), matching grid_sample.
struct Camera {
  Mat3 K = Mat3::identity();
  Mat4 w2c = Mat4::identity();
  long width = 0;
  long height = 0;

  double fx() const { return K(0, 0); }
  double fy() const { return K(1, 1); }
  double cx() const { return K(0, 2); }
  double cy() const { return K(1, 2); }

  void validate() const;
  Vec3 center() const;          // camera position in world space
  Vec3 forward_world() const;   // optical axis direction in world space
  Vec3 point_to_camera(const Vec3& p) const;

  // Intrinsics rescaled so pixel (0,0) maps to -1 and (W-1,H-1) to +1.
  Mat3 normalized_intrinsics() const;

  // Row-major flatten of homog(normalized K) * w2c. Input to the camera
  // embedding MLP; identity pose with centered unit intrinsics flattens to
  // the 4x4 identity.
  std::array<double, 16> embedding_input() const;

  // Camera with the same K looking from `eye` toward `target`.
  static Camera look_at(const Vec3& eye, const Vec3& target, const Mat3& K,
                        long width, long height);
};

struct ProjectedPoint {
  double u = 0, v = 0;    // normalized coords
  double px = 0, py = 0;  // pixel coords
  double depth = 0;
  bool valid = false;
};

// margin shrinks the accepted square: |u|,|v| <= 1 - margin. Points at or
// behind the image plane (depth <= 1e-6) are invalid and keep sentinel
// coords (-10,-10).
ProjectedPoint project_point(const Camera& cam, const Vec3& p,
                             double margin = 0.0);

// Tape op: mu [N,3] -> normalized uv [N,2]. Invalid rows are pinned to the
// sentinel and receive no gradient. `info` reports per-row validity/depth.
Tensor project_pinhole(const Tensor& mu, const Camera& cam,
                       std::vector<ProjectedPoint>* info = nullptr);

// Rebases all poses so cams[0] becomes the identity extrinsic. Relative
// poses are preserved exactly; K and sizes are untouched.
std::vector<Camera> normalize_to_reference(const std::vector<Camera>& cams);

// Least-squares point nearest all optical axes. Falls back to a point 2.0
// ahead of the mean camera when the axes are (near) parallel or there is a
// single view.
Vec3 scene_center(const std::vector<Camera>& cams);

bool in_cone_of_vision(const Vec3& p, const std::vector<Camera>& cams,
                       double margin = 0.0);

}  // namespace unigs
