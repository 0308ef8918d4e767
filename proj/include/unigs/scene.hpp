#pragma once

#include <string>
#include <vector>

#include "unigs/camera.hpp"
#include "unigs/tensor.hpp"

namespace unigs {

struct SceneView {
  Camera cam;
  std::string image;            // PNG path relative to the scene dir
  std::string mask;             // optional companion mask path
  std::string split = "input";  // "input" or "held-out"
};

struct Scene {
  std::string dir;
  std::vector<SceneView> views;

  std::vector<long> input_indices() const;
  std::vector<long> heldout_indices() const;
  std::vector<Camera> cameras(const std::vector<long>& idx) const;
};

struct ViewData {
  Tensor image;  // [3,H,W]
  Tensor mask;   // [1,H,W], all-ones when the view declares none
};

// Parses dir/cameras.json, reads image headers for dimensions, validates,
// and rebases every pose onto the first view. Mask precedence per view:
// companion file from the json, else the image's own alpha channel, else
// all-foreground.
Scene load_scene(const std::string& dir);

// Writes scene.dir/cameras.json (images are expected to exist already).
void save_cameras(const Scene& scene);

ViewData load_view(const Scene& scene, long view);

}  // namespace unigs
