#include "unigs/synth.hpp"

#include <array>
#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include "unigs/common.hpp"
#include "unigs/png_io.hpp"
#include "unigs/renderer.hpp"

namespace fs = std::filesystem;

namespace unigs {
namespace {

constexpr double kPi = 3.141592653589793;

struct Blob {
  Vec3 mu;
  double opacity = 0.9;              // (0,1)
  Vec3 scale{0.1, 0.1, 0.1};        // linear
  std::array<double, 4> quat{1, 0, 0, 0};
  std::array<double, 3> rgb{0.5, 0.5, 0.5};
  // raw band-1 coefficients (c1,c2,c3) per channel, usually zero
  std::array<std::array<double, 3>, 3> band1{};
};

std::array<double, 4> quat_mul(const std::array<double, 4>& a,
                               const std::array<double, 4>& b) {
  return {a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
          a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
          a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
          a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
}

// Shepperd's method, returns unit (w,x,y,z).
std::array<double, 4> quat_from_rotation(const Mat3& R) {
  double w = 0, x = 0, y = 0, z = 0;
  const double tr = R(0, 0) + R(1, 1) + R(2, 2);
  if (tr > 0) {
    double s = std::sqrt(tr + 1.0) * 2;
    w = 0.25 * s;
    x = (R(2, 1) - R(1, 2)) / s;
    y = (R(0, 2) - R(2, 0)) / s;
    z = (R(1, 0) - R(0, 1)) / s;
  } else if (R(0, 0) > R(1, 1) && R(0, 0) > R(2, 2)) {
    double s = std::sqrt(1.0 + R(0, 0) - R(1, 1) - R(2, 2)) * 2;
    w = (R(2, 1) - R(1, 2)) / s;
    x = 0.25 * s;
    y = (R(0, 1) + R(1, 0)) / s;
    z = (R(0, 2) + R(2, 0)) / s;
  } else if (R(1, 1) > R(2, 2)) {
    double s = std::sqrt(1.0 + R(1, 1) - R(0, 0) - R(2, 2)) * 2;
    w = (R(0, 2) - R(2, 0)) / s;
    x = (R(0, 1) + R(1, 0)) / s;
    y = 0.25 * s;
    z = (R(1, 2) + R(2, 1)) / s;
  } else {
    double s = std::sqrt(1.0 + R(2, 2) - R(0, 0) - R(1, 1)) * 2;
    w = (R(1, 0) - R(0, 1)) / s;
    x = (R(0, 2) + R(2, 0)) / s;
    y = (R(1, 2) + R(2, 1)) / s;
    z = 0.25 * s;
  }
  double n = std::sqrt(w * w + x * x + y * y + z * z);
  return {w / n, x / n, y / n, z / n};
}

std::array<double, 4> random_unit_quat(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double u1 = u(rng), u2 = u(rng), u3 = u(rng);
  const double a = std::sqrt(1 - u1), b = std::sqrt(u1);
  return {b * std::cos(2 * kPi * u3), a * std::sin(2 * kPi * u2),
          a * std::cos(2 * kPi * u2), b * std::sin(2 * kPi * u3)};
}

double jitter(std::mt19937_64& rng, double amp) {
  return std::uniform_real_distribution<double>(-amp, amp)(rng);
}

std::vector<Blob> make_spheres3(std::mt19937_64& rng) {
  const std::array<std::array<double, 3>, 3> base = {{
      {0.88, 0.22, 0.20},
      {0.22, 0.82, 0.28},
      {0.24, 0.34, 0.92},
  }};
  std::vector<Blob> blobs;
  for (int i = 0; i < 3; ++i) {
    const double phi = 2 * kPi * i / 3.0 + jitter(rng, 0.35);
    const double rad = 0.38 + jitter(rng, 0.08);
    Blob b;
    b.mu = {rad * std::cos(phi), rad * std::sin(phi), jitter(rng, 0.15)};
    const double r = 0.22 + jitter(rng, 0.05);
    b.scale = {r / 2, r / 2, r / 2};
    b.opacity = 0.88;
    for (int c = 0; c < 3; ++c)
      b.rgb[static_cast<size_t>(c)] =
          std::clamp(base[static_cast<size_t>(i)][static_cast<size_t>(c)] +
                         jitter(rng, 0.08),
                     0.02, 0.98);
    blobs.push_back(b);
  }
  return blobs;
}

std::vector<Blob> make_cube(std::mt19937_64& rng) {
  const std::array<std::array<double, 3>, 6> face_rgb = {{
      {0.90, 0.25, 0.20},
      {0.20, 0.80, 0.30},
      {0.25, 0.35, 0.90},
      {0.92, 0.85, 0.25},
      {0.85, 0.30, 0.85},
      {0.25, 0.85, 0.85},
  }};
  const std::array<double, 4> q = random_unit_quat(rng);
  const Mat3 R = rotation_from_quat(q);
  const double half = 0.32, grid = 0.21;
  std::vector<Blob> blobs;
  for (int axis = 0; axis < 3; ++axis) {
    for (int sign = -1; sign <= 1; sign += 2) {
      const size_t face = static_cast<size_t>(axis * 2 + (sign > 0 ? 0 : 1));
      for (int gi = -1; gi <= 1; ++gi) {
        for (int gj = -1; gj <= 1; ++gj) {
          Vec3 local{0, 0, 0};
          double* lv = &local.x;
          lv[axis] = sign * half;
          lv[(axis + 1) % 3] = gi * grid;
          lv[(axis + 2) % 3] = gj * grid;
          Blob b;
          b.mu = R * local;
          Vec3 s{0, 0, 0};
          double* sv = &s.x;
          sv[axis] = 0.02;  // flattened along the face normal
          sv[(axis + 1) % 3] = 0.085;
          sv[(axis + 2) % 3] = 0.085;
          b.scale = s;
          b.quat = q;
          b.opacity = 0.92;
          b.rgb = face_rgb[face];
          for (auto& c : b.rgb)
            c = std::clamp(c + jitter(rng, 0.04), 0.02, 0.98);
          blobs.push_back(b);
        }
      }
    }
  }
  return blobs;
}

std::vector<Blob> make_random_gaussians(std::mt19937_64& rng, long n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Blob> blobs;
  while (static_cast<long>(blobs.size()) < n) {
    Vec3 p{jitter(rng, 0.55), jitter(rng, 0.55), jitter(rng, 0.55)};
    if (p.norm() > 0.55) continue;
    Blob b;
    b.mu = p;
    for (double* s : {&b.scale.x, &b.scale.y, &b.scale.z})
      *s = 0.04 * std::pow(0.13 / 0.04, u(rng));  // log-uniform
    b.quat = random_unit_quat(rng);
    b.opacity = 0.55 + 0.40 * u(rng);
    for (auto& c : b.rgb) c = 0.1 + 0.8 * u(rng);
    for (auto& ch : b.band1)
      for (auto& c : ch) c = jitter(rng, 0.12);
    blobs.push_back(b);
  }
  return blobs;
}

// Rebasing the cameras onto view 0 moves the world into that camera's
// frame; the content built around the design-frame origin has to follow:
// mu -> R0 mu + t0, rotations premultiplied, and the linear (band-1) color
// part rotated as the direction form it is.
void rebase_blobs(std::vector<Blob>& blobs, const Mat4& w2c0) {
  Mat3 R0;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) R0(r, c) = w2c0(r, c);
  const Vec3 t0{w2c0(0, 3), w2c0(1, 3), w2c0(2, 3)};
  const std::array<double, 4> q0 = quat_from_rotation(R0);
  for (Blob& b : blobs) {
    b.mu = R0 * b.mu + t0;
    b.quat = quat_mul(q0, b.quat);
    for (auto& ch : b.band1) {
      const Vec3 u{-ch[2], -ch[0], ch[1]};
      const Vec3 v = R0 * u;
      ch = {-v.y, v.z, -v.x};
    }
  }
}

RawGaussianParams blobs_to_raw(const std::vector<Blob>& blobs) {
  const long n = static_cast<long>(blobs.size());
  RawGaussianParams raw = make_raw_gaussians(n);
  for (long i = 0; i < n; ++i) {
    const Blob& b = blobs[static_cast<size_t>(i)];
    raw.mu.data()[static_cast<size_t>(3 * i) + 0] = b.mu.x;
    raw.mu.data()[static_cast<size_t>(3 * i) + 1] = b.mu.y;
    raw.mu.data()[static_cast<size_t>(3 * i) + 2] = b.mu.z;
    raw.opacity.data()[static_cast<size_t>(i)] =
        std::log(b.opacity / (1.0 - b.opacity));
    raw.scale.data()[static_cast<size_t>(3 * i) + 0] = std::log(b.scale.x);
    raw.scale.data()[static_cast<size_t>(3 * i) + 1] = std::log(b.scale.y);
    raw.scale.data()[static_cast<size_t>(3 * i) + 2] = std::log(b.scale.z);
    for (int k = 0; k < 4; ++k)
      raw.rotation.data()[static_cast<size_t>(4 * i + k)] =
          b.quat[static_cast<size_t>(k)];
    for (int c = 0; c < 3; ++c) {
      raw.sh.data()[static_cast<size_t>(12 * i + 4 * c)] =
          (b.rgb[static_cast<size_t>(c)] - 0.5) / kShC0;
      for (int j = 0; j < 3; ++j)
        raw.sh.data()[static_cast<size_t>(12 * i + 4 * c + 1 + j)] =
            b.band1[static_cast<size_t>(c)][static_cast<size_t>(j)];
    }
  }
  return raw;
}

Camera ring_camera(double azimuth, double elev_deg, long w, long h) {
  const double rad = 2.5;
  const double el = elev_deg * kPi / 180.0;
  const Vec3 eye{rad * std::cos(el) * std::cos(azimuth),
                 rad * std::cos(el) * std::sin(azimuth), rad * std::sin(el)};
  Mat3 K = Mat3::identity();
  K(0, 0) = K(1, 1) = 1.1 * static_cast<double>(w);
  K(0, 2) = (static_cast<double>(w) - 1) / 2.0;
  K(1, 2) = (static_cast<double>(h) - 1) / 2.0;
  return Camera::look_at(eye, {0, 0, 0}, K, w, h);
}

std::string view_name(long i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03ld.png", i);
  return buf;
}

Camera ring_input_camera(long i, long n_views, long w, long h) {
  const double az =
      2 * kPi * static_cast<double>(i) / static_cast<double>(n_views);
  const double elev = 30.0 * static_cast<double>(i % 4) / 3.0;
  return ring_camera(az, elev, w, h);
}

}  // namespace

std::vector<Camera> ring_cameras(long n_views, long width, long height) {
  require(n_views >= 1, "ring_cameras: need at least one view");
  std::vector<Camera> cams;
  for (long i = 0; i < n_views; ++i)
    cams.push_back(ring_input_camera(i, n_views, width, height));
  return normalize_to_reference(cams);
}

SynthResult synth_scene(const std::string& out_dir, const SynthConfig& cfg) {
  require(cfg.n_views >= 1, "synth_scene: need at least one input view");
  require(cfg.n_heldout >= 0, "synth_scene: negative held-out count");
  require(cfg.width >= 16 && cfg.height >= 16,
          "synth_scene: resolution below 16x16");

  std::mt19937_64 rng(mix_seed(cfg.seed, 0x5c3e));
  std::vector<Blob> blobs;
  if (cfg.kind == "spheres3") {
    blobs = make_spheres3(rng);
  } else if (cfg.kind == "cube") {
    blobs = make_cube(rng);
  } else if (cfg.kind == "random_gaussians") {
    blobs = make_random_gaussians(rng, cfg.n_random);
  } else {
    throw ContractError("synth_scene: unknown kind \"" + cfg.kind + "\"");
  }

  // Input azimuths on a uniform ring, held-out half a step off the ring so
  // the pose sets are disjoint. Elevations cycle over 0..30 degrees.
  std::vector<Camera> cams;
  std::vector<std::string> splits;
  for (long i = 0; i < cfg.n_views; ++i) {
    cams.push_back(ring_input_camera(i, cfg.n_views, cfg.width, cfg.height));
    splits.push_back("input");
  }
  for (long i = 0; i < cfg.n_heldout; ++i) {
    const double az = 2 * kPi * (static_cast<double>(i) + 0.5) /
                      static_cast<double>(cfg.n_views);
    const double elev = (i % 2 == 0) ? 17.0 : 8.0;
    cams.push_back(ring_camera(az, elev, cfg.width, cfg.height));
    splits.push_back("held-out");
  }

  rebase_blobs(blobs, cams[0].w2c);
  const std::vector<Camera> normed = normalize_to_reference(cams);

  SynthResult result;
  result.gt = blobs_to_raw(blobs);

  fs::create_directories(out_dir);
  result.scene.dir = out_dir;
  GaussianSet set;
  {
    NoGradScope ng;
    set = activate_params(result.gt);
  }
  for (size_t i = 0; i < normed.size(); ++i) {
    SceneView view;
    view.cam = normed[i];
    view.image = view_name(static_cast<long>(i));
    view.split = splits[i];
    Tensor img;
    {
      NoGradScope ng;
      img = render_gaussians(set, normed[i]);
    }
    save_png((fs::path(out_dir) / view.image).string(), img);
    result.scene.views.push_back(std::move(view));
  }
  save_cameras(result.scene);
  save_ply((fs::path(out_dir) / "gt.ply").string(), result.gt);
  return result;
}

}  // namespace unigs
