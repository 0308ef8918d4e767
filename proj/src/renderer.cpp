#include "unigs/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace unigs {

namespace {

using NodeP = std::shared_ptr<TensorNode>;

std::uint64_t mix64(std::uint64_t h, std::uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  return h;
}

std::uint64_t double_bits(double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, sizeof(u));
  return u;
}

// one splat after projection, in the order it entered the tile lists
struct Splat {
  long row;  // input row
  double tx, ty, tz;
  double px, py;
  double j00, j02, j11, j12;  // nonzero projection jacobian entries
  double v[3][3];             // camera-space covariance
  double cov_a, cov_b, cov_c, det;
  double conic_a, conic_b, conic_c;
  double opa;
  double col[3];
  int clamp_lo = 0, clamp_hi = 0;  // per-channel color clamp masks
  double dirx, diry, dirz, dir_len;
  long x0, x1, y0, y1;
  std::uint64_t chash;
  long shaded = 0, skipped = 0, capped = 0;
};

struct PixelState {
  double t_final = 1.0;
  int processed = 0;  // entries of the tile list iterated at this pixel
};

// d(rotation matrix)/d(quat component), rows matching rotation_from_quat
void quat_rotation_partials(double w, double x, double y, double z,
                            double dw[9], double dx[9], double dy[9],
                            double dz[9]) {
  double pw[9] = {0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0};
  double px[9] = {0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x};
  double py[9] = {-4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y};
  double pz[9] = {-4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0};
  std::memcpy(dw, pw, sizeof(pw));
  std::memcpy(dx, px, sizeof(px));
  std::memcpy(dy, py, sizeof(py));
  std::memcpy(dz, pz, sizeof(pz));
}

}  // namespace

Tensor render_gaussians(const GaussianSet& gs, const Camera& cam,
                        const RenderConfig& cfg, RenderStats* stats) {
  cam.validate();
  require(cfg.tile > 0 && cfg.near_plane > 0 && cfg.radius_sigmas > 0,
          "render: bad config");
  long n = gs.count();
  require(gs.mu.defined() && gs.mu.ndim() == 2 && gs.mu.dim(1) == 3,
          "render: mu must be [N,3]");
  require(gs.opacity.ndim() == 2 && gs.opacity.dim(0) == n &&
              gs.opacity.dim(1) == 1,
          "render: opacity must be [N,1]");
  require(gs.scale.ndim() == 2 && gs.scale.dim(0) == n && gs.scale.dim(1) == 3,
          "render: scale must be [N,3]");
  require(gs.rotation.ndim() == 2 && gs.rotation.dim(0) == n &&
              gs.rotation.dim(1) == 4,
          "render: rotation must be [N,4]");
  require(gs.sh.ndim() == 2 && gs.sh.dim(0) == n && gs.sh.dim(1) == 12,
          "render: sh must be [N,12]");

  const long W = cam.width, H = cam.height;
  const double fx = cam.fx(), fy = cam.fy(), cx = cam.cx(), cy = cam.cy();
  const Mat3 Wr = cam.w2c.rotation();
  const Vec3 tr = cam.w2c.translation();
  const Vec3 eye = cam.center();

  const double* mu = gs.mu.data().data();
  const double* opa = gs.opacity.data().data();
  const double* sc = gs.scale.data().data();
  const double* rot = gs.rotation.data().data();
  const double* sh = gs.sh.data().data();

  std::uint64_t sig = 0xcbf29ce484222325ull;
  std::vector<Splat> splats;
  splats.reserve(static_cast<size_t>(n));
  // -1: near-culled, -2: footprint-culled, otherwise index into splats
  std::vector<long> row_state(static_cast<size_t>(n), -1);
  RenderStats local;

  for (long i = 0; i < n; ++i) {
    double o = opa[i];
    require(o >= 0.0 && o <= 1.0, "render: opacity outside [0,1]");
    double qw = rot[i * 4 + 0], qx = rot[i * 4 + 1], qy = rot[i * 4 + 2],
           qz = rot[i * 4 + 3];
    double qn = std::sqrt(qw * qw + qx * qx + qy * qy + qz * qz);
    require(std::fabs(qn - 1.0) <= 1e-3, "render: rotation not unit");
    double sx = sc[i * 3 + 0], sy = sc[i * 3 + 1], sz = sc[i * 3 + 2];
    require(sx > 0 && sy > 0 && sz > 0, "render: scales must be positive");

    Vec3 p{mu[i * 3 + 0], mu[i * 3 + 1], mu[i * 3 + 2]};
    Vec3 t = Wr * p + tr;
    if (t.z <= cfg.near_plane) {
      ++local.culled_near;
      continue;
    }
    row_state[static_cast<size_t>(i)] = -2;

    Splat s{};
    s.row = i;
    s.tx = t.x;
    s.ty = t.y;
    s.tz = t.z;

    // world covariance through the camera rotation
    Mat3 R = rotation_from_quat({qw, qx, qy, qz});
    Mat3 M = R;
    for (int r = 0; r < 3; ++r) {
      M(r, 0) *= sx;
      M(r, 1) *= sy;
      M(r, 2) *= sz;
    }
    Mat3 sigma = M * M.transpose();
    Mat3 V = Wr * sigma * Wr.transpose();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) s.v[r][c] = V(r, c);

    s.j00 = fx / t.z;
    s.j02 = -fx * t.x / (t.z * t.z);
    s.j11 = fy / t.z;
    s.j12 = -fy * t.y / (t.z * t.z);
    // cov2d = J V J^T + blur I, with J rows (j00,0,j02) and (0,j11,j12)
    double jv0[3] = {s.j00 * s.v[0][0] + s.j02 * s.v[2][0],
                     s.j00 * s.v[0][1] + s.j02 * s.v[2][1],
                     s.j00 * s.v[0][2] + s.j02 * s.v[2][2]};
    double jv1[3] = {s.j11 * s.v[1][0] + s.j12 * s.v[2][0],
                     s.j11 * s.v[1][1] + s.j12 * s.v[2][1],
                     s.j11 * s.v[1][2] + s.j12 * s.v[2][2]};
    s.cov_a = jv0[0] * s.j00 + jv0[2] * s.j02 + cfg.blur;
    s.cov_b = jv0[1] * s.j11 + jv0[2] * s.j12;
    s.cov_c = jv1[1] * s.j11 + jv1[2] * s.j12 + cfg.blur;
    s.det = s.cov_a * s.cov_c - s.cov_b * s.cov_b;
    if (s.det <= 0) {
      ++local.culled_footprint;
      continue;
    }
    double mid = 0.5 * (s.cov_a + s.cov_c);
    double lmax = mid + std::sqrt(std::max(0.0, mid * mid - s.det));
    double radius = cfg.radius_sigmas * std::sqrt(lmax);

    s.px = fx * t.x / t.z + cx;
    s.py = fy * t.y / t.z + cy;
    s.x0 = std::max<long>(0, static_cast<long>(std::floor(s.px - radius)));
    s.x1 = std::min<long>(W - 1, static_cast<long>(std::ceil(s.px + radius)));
    s.y0 = std::max<long>(0, static_cast<long>(std::floor(s.py - radius)));
    s.y1 = std::min<long>(H - 1, static_cast<long>(std::ceil(s.py + radius)));
    if (s.x0 > s.x1 || s.y0 > s.y1) {
      ++local.culled_footprint;
      continue;
    }

    s.conic_a = s.cov_c / s.det;
    s.conic_b = -s.cov_b / s.det;
    s.conic_c = s.cov_a / s.det;
    s.opa = o;

    Vec3 d{p.x - eye.x, p.y - eye.y, p.z - eye.z};
    s.dir_len = d.norm();
    require(s.dir_len > 1e-12, "render: gaussian at the camera center");
    s.dirx = d.x / s.dir_len;
    s.diry = d.y / s.dir_len;
    s.dirz = d.z / s.dir_len;
    for (int ch = 0; ch < 3; ++ch) {
      const double* c4 = sh + i * 12 + 4 * ch;
      double raw = 0.5 + kShC0 * c4[0] +
                   kShC1 * (-c4[1] * s.diry + c4[2] * s.dirz - c4[3] * s.dirx);
      if (raw < 0.0) {
        s.clamp_lo |= 1 << ch;
        raw = 0.0;
      } else if (raw > 1.0) {
        s.clamp_hi |= 1 << ch;
        raw = 1.0;
      }
      s.col[ch] = raw;
    }

    std::uint64_t ch = 0x100000001b3ull;
    for (long k = 0; k < 3; ++k) ch = mix64(ch, double_bits(mu[i * 3 + k]));
    ch = mix64(ch, double_bits(o));
    for (long k = 0; k < 3; ++k) ch = mix64(ch, double_bits(sc[i * 3 + k]));
    for (long k = 0; k < 4; ++k) ch = mix64(ch, double_bits(rot[i * 4 + k]));
    for (long k = 0; k < 12; ++k) ch = mix64(ch, double_bits(sh[i * 12 + k]));
    s.chash = ch;

    row_state[static_cast<size_t>(i)] = static_cast<long>(splats.size());
    splats.push_back(s);
  }

  // tile lists, front to back; ties on depth fall back to the content hash
  // so the order never depends on input row numbering
  const long tiles_x = (W + cfg.tile - 1) / cfg.tile;
  const long tiles_y = (H + cfg.tile - 1) / cfg.tile;
  std::vector<std::vector<int>> tiles(
      static_cast<size_t>(tiles_x * tiles_y));
  for (size_t si = 0; si < splats.size(); ++si) {
    const Splat& s = splats[si];
    long tx0 = s.x0 / cfg.tile, tx1 = s.x1 / cfg.tile;
    long ty0 = s.y0 / cfg.tile, ty1 = s.y1 / cfg.tile;
    for (long ty = ty0; ty <= ty1; ++ty)
      for (long tx = tx0; tx <= tx1; ++tx)
        tiles[static_cast<size_t>(ty * tiles_x + tx)].push_back(
            static_cast<int>(si));
  }
  for (auto& list : tiles)
    std::stable_sort(list.begin(), list.end(), [&](int a, int b) {
      if (splats[static_cast<size_t>(a)].tz !=
          splats[static_cast<size_t>(b)].tz)
        return splats[static_cast<size_t>(a)].tz <
               splats[static_cast<size_t>(b)].tz;
      return splats[static_cast<size_t>(a)].chash <
             splats[static_cast<size_t>(b)].chash;
    });

  bool rg = active_tape() != nullptr &&
            (gs.mu.requires_grad() || gs.opacity.requires_grad() ||
             gs.scale.requires_grad() || gs.rotation.requires_grad() ||
             gs.sh.requires_grad());
  Tensor out = Tensor::zeros({3, H, W}, rg);
  double* img = out.data().data();
  std::vector<PixelState> pix(static_cast<size_t>(W * H));

  for (long ty = 0; ty < tiles_y; ++ty)
    for (long tx = 0; tx < tiles_x; ++tx) {
      const auto& list = tiles[static_cast<size_t>(ty * tiles_x + tx)];
      long yb = ty * cfg.tile, xb = tx * cfg.tile;
      long ye = std::min(H, yb + cfg.tile), xe = std::min(W, xb + cfg.tile);
      for (long y = yb; y < ye; ++y)
        for (long x = xb; x < xe; ++x) {
          double T = 1.0;
          double acc[3] = {0, 0, 0};
          int processed = 0;
          for (size_t j = 0; j < list.size(); ++j) {
            Splat& s = splats[static_cast<size_t>(list[j])];
            processed = static_cast<int>(j) + 1;
            double dxp = static_cast<double>(x) - s.px;
            double dyp = static_cast<double>(y) - s.py;
            double q = s.conic_a * dxp * dxp + 2.0 * s.conic_b * dxp * dyp +
                       s.conic_c * dyp * dyp;
            double g = std::exp(-0.5 * q);
            double araw = s.opa * g;
            double alpha = araw;
            if (araw >= cfg.alpha_max) {
              alpha = cfg.alpha_max;
              ++s.capped;
            }
            if (alpha < cfg.alpha_min) {
              ++s.skipped;
              continue;
            }
            double w = alpha * T;
            acc[0] += w * s.col[0];
            acc[1] += w * s.col[1];
            acc[2] += w * s.col[2];
            ++s.shaded;
            T *= 1.0 - alpha;
            if (T < cfg.t_stop) break;
          }
          PixelState& st = pix[static_cast<size_t>(y * W + x)];
          st.t_final = T;
          st.processed = processed;
          for (int ch = 0; ch < 3; ++ch)
            img[ch * H * W + y * W + x] = acc[ch] + cfg.background[ch] * T;
        }
    }
  round_to_storage(out.data());

  for (long i = 0; i < n; ++i) {
    long si = row_state[static_cast<size_t>(i)];
    if (si < 0) {
      sig = mix64(sig, si == -1 ? 0x7euLL : 0x7fuLL);
      continue;
    }
    const Splat& s = splats[static_cast<size_t>(si)];
    sig = mix64(sig, static_cast<std::uint64_t>(s.x0));
    sig = mix64(sig, static_cast<std::uint64_t>(s.x1));
    sig = mix64(sig, static_cast<std::uint64_t>(s.y0));
    sig = mix64(sig, static_cast<std::uint64_t>(s.y1));
    sig = mix64(sig, static_cast<std::uint64_t>(s.clamp_lo * 16 + s.clamp_hi));
    sig = mix64(sig, static_cast<std::uint64_t>(s.shaded));
    sig = mix64(sig, static_cast<std::uint64_t>(s.skipped));
    sig = mix64(sig, static_cast<std::uint64_t>(s.capped));
    if (s.shaded > 0) ++local.contributing;
  }
  local.branch_signature = sig;
  if (stats) *stats = local;

  if (rg) {
    NodeP mu_n = gs.mu.node_ptr(), op_n = gs.opacity.node_ptr(),
          sc_n = gs.scale.node_ptr(), ro_n = gs.rotation.node_ptr(),
          sh_n = gs.sh.node_ptr(), out_n = out.node_ptr();
    Mat3 WrT = Wr.transpose();
    RenderConfig c = cfg;
    auto splats_c = std::make_shared<std::vector<Splat>>(std::move(splats));
    auto tiles_c = std::make_shared<std::vector<std::vector<int>>>(
        std::move(tiles));
    auto pix_c = std::make_shared<std::vector<PixelState>>(std::move(pix));
    active_tape()->record([=]() {
      if (out_n->grad.empty()) return;
      const double* go = out_n->grad.data();
      const auto& sp = *splats_c;
      size_t ns = sp.size();
      std::vector<double> d_col(ns * 3, 0.0), d_conic(ns * 3, 0.0),
          d_center(ns * 2, 0.0), d_opa(ns, 0.0);

      for (long ty = 0; ty < tiles_y; ++ty)
        for (long tx = 0; tx < tiles_x; ++tx) {
          const auto& list = (*tiles_c)[static_cast<size_t>(ty * tiles_x + tx)];
          if (list.empty()) continue;
          long yb = ty * c.tile, xb = tx * c.tile;
          long ye = std::min(H, yb + c.tile), xe = std::min(W, xb + c.tile);
          for (long y = yb; y < ye; ++y)
            for (long x = xb; x < xe; ++x) {
              const PixelState& st = pix_c->at(static_cast<size_t>(y * W + x));
              double g[3] = {go[0 * H * W + y * W + x],
                             go[1 * H * W + y * W + x],
                             go[2 * H * W + y * W + x]};
              if (g[0] == 0 && g[1] == 0 && g[2] == 0) continue;
              double S[3] = {c.background[0] * st.t_final,
                             c.background[1] * st.t_final,
                             c.background[2] * st.t_final};
              double Tcur = st.t_final;
              for (int j = st.processed - 1; j >= 0; --j) {
                size_t si = static_cast<size_t>(list[static_cast<size_t>(j)]);
                const Splat& s = sp[si];
                double dxp = static_cast<double>(x) - s.px;
                double dyp = static_cast<double>(y) - s.py;
                double q = s.conic_a * dxp * dxp +
                           2.0 * s.conic_b * dxp * dyp + s.conic_c * dyp * dyp;
                double gg = std::exp(-0.5 * q);
                double araw = s.opa * gg;
                bool capped = araw >= c.alpha_max;
                double alpha = capped ? c.alpha_max : araw;
                if (alpha < c.alpha_min) continue;
                double Tbefore = Tcur / (1.0 - alpha);
                double w = alpha * Tbefore;
                double dalpha = 0.0;
                for (int ch = 0; ch < 3; ++ch) {
                  dalpha += g[ch] * (Tbefore * s.col[ch] - S[ch] / (1.0 - alpha));
                  d_col[si * 3 + static_cast<size_t>(ch)] += g[ch] * w;
                }
                if (!capped) {
                  d_opa[si] += gg * dalpha;
                  double dg = s.opa * dalpha;
                  double dq = -0.5 * gg * dg;
                  d_conic[si * 3 + 0] += dq * dxp * dxp;
                  d_conic[si * 3 + 1] += dq * 2.0 * dxp * dyp;
                  d_conic[si * 3 + 2] += dq * dyp * dyp;
                  double ddx = dq * 2.0 * (s.conic_a * dxp + s.conic_b * dyp);
                  double ddy = dq * 2.0 * (s.conic_b * dxp + s.conic_c * dyp);
                  d_center[si * 2 + 0] -= ddx;
                  d_center[si * 2 + 1] -= ddy;
                }
                for (int ch = 0; ch < 3; ++ch) S[ch] += w * s.col[ch];
                Tcur = Tbefore;
              }
            }
        }

      auto add3 = [](std::vector<double>* dst, long row, const double* v) {
        if (!dst) return;
        (*dst)[static_cast<size_t>(row * 3 + 0)] += v[0];
        (*dst)[static_cast<size_t>(row * 3 + 1)] += v[1];
        (*dst)[static_cast<size_t>(row * 3 + 2)] += v[2];
      };
      std::vector<double>* gmu =
          mu_n->requires_grad ? &mu_n->ensure_grad() : nullptr;
      std::vector<double>* gop =
          op_n->requires_grad ? &op_n->ensure_grad() : nullptr;
      std::vector<double>* gsc =
          sc_n->requires_grad ? &sc_n->ensure_grad() : nullptr;
      std::vector<double>* gro =
          ro_n->requires_grad ? &ro_n->ensure_grad() : nullptr;
      std::vector<double>* gsh =
          sh_n->requires_grad ? &sh_n->ensure_grad() : nullptr;
      const double* sc_d = sc_n->data.data();
      const double* rot_d = ro_n->data.data();
      const double* sh_d = sh_n->data.data();

      for (size_t si = 0; si < ns; ++si) {
        const Splat& s = sp[si];
        long i = s.row;
        double dca = d_conic[si * 3 + 0], dcb = d_conic[si * 3 + 1],
               dcc = d_conic[si * 3 + 2];
        double a = s.cov_a, b = s.cov_b, cc2 = s.cov_c;
        double inv_det2 = 1.0 / (s.det * s.det);
        // conic is the inverse of the 2d covariance
        double da = (-dca * cc2 * cc2 + dcb * b * cc2 - dcc * b * b) * inv_det2;
        double db = (2.0 * dca * b * cc2 - dcb * (a * cc2 + b * b) +
                     2.0 * dcc * a * b) *
                    inv_det2;
        double dc = (-dca * b * b + dcb * a * b - dcc * a * a) * inv_det2;

        // through cov2d = J V J^T + blur I
        double j0[3] = {s.j00, 0.0, s.j02};
        double j1[3] = {0.0, s.j11, s.j12};
        double vj0[3], vj1[3];
        for (int r = 0; r < 3; ++r) {
          vj0[r] = s.v[r][0] * j0[0] + s.v[r][1] * j0[1] + s.v[r][2] * j0[2];
          vj1[r] = s.v[r][0] * j1[0] + s.v[r][1] * j1[1] + s.v[r][2] * j1[2];
        }
        double dj0[3], dj1[3];
        for (int r = 0; r < 3; ++r) {
          dj0[r] = 2.0 * da * vj0[r] + db * vj1[r];
          dj1[r] = db * vj0[r] + 2.0 * dc * vj1[r];
        }
        double dV[3][3];
        for (int r = 0; r < 3; ++r)
          for (int c2 = 0; c2 < 3; ++c2)
            dV[r][c2] = da * j0[r] * j0[c2] + db * j0[r] * j1[c2] +
                        dc * j1[r] * j1[c2];

        // camera-space center gradient: projection jacobian entries first
        double dtx = dj0[2] * (-fx / (s.tz * s.tz));
        double dty = dj1[2] * (-fy / (s.tz * s.tz));
        double dtz = dj0[0] * (-fx / (s.tz * s.tz)) +
                     dj1[1] * (-fy / (s.tz * s.tz)) +
                     dj0[2] * (2.0 * fx * s.tx / (s.tz * s.tz * s.tz)) +
                     dj1[2] * (2.0 * fy * s.ty / (s.tz * s.tz * s.tz));
        // then the projected pixel center
        double dpx = d_center[si * 2 + 0], dpy = d_center[si * 2 + 1];
        dtx += dpx * fx / s.tz;
        dty += dpy * fy / s.tz;
        dtz += dpx * (-fx * s.tx / (s.tz * s.tz)) +
               dpy * (-fy * s.ty / (s.tz * s.tz));

        // world covariance gradient: dSigma = Wr^T dV Wr
        Mat3 dVm;
        for (int r = 0; r < 3; ++r)
          for (int c2 = 0; c2 < 3; ++c2) dVm(r, c2) = dV[r][c2];
        Mat3 dSigma = WrT * dVm * Wr;

        // Sigma = M M^T with M = R diag(scale)
        double qw = rot_d[i * 4 + 0], qx = rot_d[i * 4 + 1],
               qy = rot_d[i * 4 + 2], qz = rot_d[i * 4 + 3];
        Mat3 R = rotation_from_quat({qw, qx, qy, qz});
        double sxyz[3] = {sc_d[i * 3 + 0], sc_d[i * 3 + 1], sc_d[i * 3 + 2]};
        Mat3 M = R;
        for (int r = 0; r < 3; ++r)
          for (int c2 = 0; c2 < 3; ++c2) M(r, c2) *= sxyz[c2];
        Mat3 dM;
        for (int r = 0; r < 3; ++r)
          for (int c2 = 0; c2 < 3; ++c2) {
            double v2 = 0;
            for (int k = 0; k < 3; ++k)
              v2 += (dSigma(r, k) + dSigma(k, r)) * M(k, c2);
            dM(r, c2) = v2;
          }
        if (gsc)
          for (int c2 = 0; c2 < 3; ++c2) {
            double v2 = 0;
            for (int r = 0; r < 3; ++r) v2 += dM(r, c2) * R(r, c2);
            (*gsc)[static_cast<size_t>(i * 3 + c2)] += v2;
          }
        if (gro) {
          double dR[9];
          for (int r = 0; r < 3; ++r)
            for (int c2 = 0; c2 < 3; ++c2)
              dR[r * 3 + c2] = dM(r, c2) * sxyz[c2];
          double pw[9], px2[9], py2[9], pz2[9];
          quat_rotation_partials(qw, qx, qy, qz, pw, px2, py2, pz2);
          double acc[4] = {0, 0, 0, 0};
          for (int k = 0; k < 9; ++k) {
            acc[0] += dR[k] * pw[k];
            acc[1] += dR[k] * px2[k];
            acc[2] += dR[k] * py2[k];
            acc[3] += dR[k] * pz2[k];
          }
          for (int k = 0; k < 4; ++k)
            (*gro)[static_cast<size_t>(i * 4 + k)] += acc[k];
        }

        // color path: sh coefficients and the view direction
        double dcolv[3] = {d_col[si * 3 + 0], d_col[si * 3 + 1],
                           d_col[si * 3 + 2]};
        double ddir[3] = {0, 0, 0};
        for (int ch = 0; ch < 3; ++ch) {
          bool lo = (s.clamp_lo >> ch) & 1, hi = (s.clamp_hi >> ch) & 1;
          if (lo || hi) continue;
          double d2 = dcolv[ch];
          if (gsh) {
            (*gsh)[static_cast<size_t>(i * 12 + 4 * ch + 0)] += d2 * kShC0;
            (*gsh)[static_cast<size_t>(i * 12 + 4 * ch + 1)] +=
                d2 * kShC1 * (-s.diry);
            (*gsh)[static_cast<size_t>(i * 12 + 4 * ch + 2)] +=
                d2 * kShC1 * s.dirz;
            (*gsh)[static_cast<size_t>(i * 12 + 4 * ch + 3)] +=
                d2 * kShC1 * (-s.dirx);
          }
          const double* c4 = sh_d + i * 12 + 4 * ch;
          ddir[0] += d2 * kShC1 * (-c4[3]);
          ddir[1] += d2 * kShC1 * (-c4[1]);
          ddir[2] += d2 * kShC1 * c4[2];
        }

        if (gmu) {
          // camera-space center back to the world
          Vec3 dmu_t = WrT * Vec3{dtx, dty, dtz};
          double dmu[3] = {dmu_t.x, dmu_t.y, dmu_t.z};
          // normalized view direction: (I - dd^T)/len applied to ddir
          double dotd =
              ddir[0] * s.dirx + ddir[1] * s.diry + ddir[2] * s.dirz;
          dmu[0] += (ddir[0] - s.dirx * dotd) / s.dir_len;
          dmu[1] += (ddir[1] - s.diry * dotd) / s.dir_len;
          dmu[2] += (ddir[2] - s.dirz * dotd) / s.dir_len;
          add3(gmu, i, dmu);
        }
        if (gop) (*gop)[static_cast<size_t>(i)] += d_opa[si];
      }
    });
  }
  return out;
}

}  // namespace unigs
