#pragma once

#include <array>
#include <cstdint>

#include "unigs/camera.hpp"
#include "unigs/gaussians.hpp"
#include "unigs/tensor.hpp"

namespace unigs {

struct RenderConfig {
  long tile = 16;
  double near_plane = 0.01;
  double blur = 0.3;             // isotropic floor added to the 2d covariance
  double radius_sigmas = 3.0;    // footprint radius in screen-space sigmas
  double alpha_min = 1.0 / 255.0;  // samples below this are skipped
  double alpha_max = 0.99;         // per-sample opacity cap
  double t_stop = 1e-4;  // stop blending once this close to fully opaque
  std::array<double, 3> background = {0.0, 0.0, 0.0};
};

// Branch bookkeeping for one render. The signature folds every discrete
// decision (culls, pixel footprints, color clamps, skip/cap/stop counts)
// into one value: two renders with equal signatures took the same code
// path, so finite differences probe only the smooth part in between.
struct RenderStats {
  long culled_near = 0;
  long culled_footprint = 0;
  long contributing = 0;  // gaussians that shaded at least one pixel
  std::uint64_t branch_signature = 0;
};

// Tile-based alpha blending of an activated gaussian set. Covariances are
// flattened to the image plane through the local projection jacobian, each
// splat covers a few-sigma footprint, and pixels blend front to back until
// almost opaque. Returns [3,H,W]; differentiable in all five gaussian
// tensors with a hand-written backward on the same tape as every other op.
Tensor render_gaussians(const GaussianSet& gs, const Camera& cam,
                        const RenderConfig& cfg = {},
                        RenderStats* stats = nullptr);

}  // namespace unigs
