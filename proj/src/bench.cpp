#include "unigs/bench.hpp"

#include <chrono>
#include <fstream>
#include <random>
#include <sstream>

#include "unigs/common.hpp"
#include "unigs/synth.hpp"

namespace unigs {
namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace

std::vector<BenchRow> bench_views(const BenchConfig& cfg) {
  require(!cfg.view_counts.empty(), "bench: empty view-count list");
  long max_views = 0;
  for (long v : cfg.view_counts) {
    require(v >= 1, "bench: view counts must be positive");
    max_views = std::max(max_views, v);
  }

  ParamStore ps;
  std::mt19937_64 rng(mix_seed(cfg.seed, 0xbe7c));
  ReconModel model(ps, cfg.model, rng);

  const std::vector<Camera> all_cams =
      ring_cameras(max_views, cfg.width, cfg.height);
  Tensor all_images =
      Tensor::zeros({max_views, 3, cfg.height, cfg.width});
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : all_images.data()) v = u(rng);

  std::vector<BenchRow> rows;
  for (long nv : cfg.view_counts) {
    Tensor images = Tensor::zeros({nv, 3, cfg.height, cfg.width});
    const size_t elems = static_cast<size_t>(images.numel());
    std::copy(all_images.data().begin(), all_images.data().begin() + elems,
              images.data().begin());
    std::vector<Camera> cams(all_cams.begin(), all_cams.begin() + nv);

    BenchRow row;
    row.views = nv;
    row.encode_ms = 1e300;
    row.total_ms = 1e300;
    for (long rep = 0; rep < std::max<long>(1, cfg.repeats); ++rep) {
      NoGradScope ng;
      auto t0 = std::chrono::steady_clock::now();
      Tensor feats = model.encoder().forward(images);
      row.encode_ms = std::min(row.encode_ms, ms_since(t0));
      (void)feats;

      std::mt19937_64 fwd_rng(mix_seed(cfg.seed, 0xf0d));
      t0 = std::chrono::steady_clock::now();
      ModelOutput out = model.forward(images, cams, fwd_rng);
      row.total_ms = std::min(row.total_ms, ms_since(t0));
      row.gaussians = out.raw.count();
    }
    row.query_bytes = model.query_buffer_bytes();
    rows.push_back(row);
  }
  return rows;
}

void write_bench_csv(const std::string& path,
                     const std::vector<BenchRow>& rows) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "bench: cannot write " + path);
  out << "views,encode_ms,total_ms,gaussians,query_bytes\n";
  for (const BenchRow& r : rows)
    out << r.views << "," << r.encode_ms << "," << r.total_ms << ","
        << r.gaussians << "," << r.query_bytes << "\n";
}

std::string bench_table(const std::vector<BenchRow>& rows) {
  std::ostringstream os;
  os << "views  encode_ms  total_ms  gaussians  query_bytes\n";
  for (const BenchRow& r : rows) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%5ld  %9.1f  %8.1f  %9ld  %11ld\n",
                  r.views, r.encode_ms, r.total_ms, r.gaussians,
                  r.query_bytes);
    os << buf;
  }
  return os.str();
}

}  // namespace unigs
