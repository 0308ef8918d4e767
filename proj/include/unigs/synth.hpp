#pragma once

#include <string>

#include "unigs/gaussians.hpp"
#include "unigs/scene.hpp"

namespace unigs {

struct SynthConfig {
  std::string kind = "spheres3";  // spheres3 | cube | random_gaussians
  long n_views = 8;               // input views on the ring
  long n_heldout = 2;             // extra views at offset azimuths
  long width = 64;
  long height = 64;
  unsigned long seed = 1;
  long n_random = 48;  // gaussian count for the random_gaussians kind
};

struct SynthResult {
  Scene scene;            // poses rebased to the first view
  RawGaussianParams gt;   // ground-truth splats in the same frame
};

// Procedurally builds a small colored object, poses a camera ring around it
// (elevations spread over 0..30 degrees, held-out azimuths interleaved with
// the inputs), renders every view, and writes PNGs + cameras.json + gt.ply
// into out_dir. Bit-reproducible for a fixed config.
SynthResult synth_scene(const std::string& out_dir, const SynthConfig& cfg);

// The synthesizer's input-view rig on its own: n poses on the ring,
// rebased to the first view. Handy for in-memory benchmarks.
std::vector<Camera> ring_cameras(long n_views, long width, long height);

}  // namespace unigs
