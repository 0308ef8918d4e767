#include "unigs/sesa.hpp"

#include <cmath>
#include <limits>

#include "unigs/ops.hpp"

namespace unigs {

namespace op = ops;

std::vector<long> farthest_point_sample(const Tensor& pts, long k) {
  require(pts.ndim() == 2 && pts.dim(0) > 0, "fps: points must be [N,D]");
  long n = pts.dim(0), d = pts.dim(1);
  require(k >= 1 && k <= n, "fps: k must be in [1,N]");
  const double* p = pts.data().data();
  std::vector<long> picked;
  picked.reserve(static_cast<size_t>(k));
  picked.push_back(0);
  std::vector<char> taken(static_cast<size_t>(n), 0);
  taken[0] = 1;
  std::vector<double> best(static_cast<size_t>(n),
                           std::numeric_limits<double>::infinity());
  for (long step = 1; step < k; ++step) {
    long last = picked.back();
    const double* q = p + last * d;
    long next = -1;
    double next_dist = -1.0;
    for (long i = 0; i < n; ++i) {
      double s = 0;
      for (long j = 0; j < d; ++j) {
        double diff = p[i * d + j] - q[j];
        s += diff * diff;
      }
      double& b = best[static_cast<size_t>(i)];
      if (s < b) b = s;
      if (!taken[static_cast<size_t>(i)] && b > next_dist) {
        next_dist = b;
        next = i;
      }
    }
    picked.push_back(next);
    taken[static_cast<size_t>(next)] = 1;
  }
  return picked;
}

SESA::SESA(ParamStore& ps, const std::string& prefix, const SESAConfig& cfg,
           std::mt19937_64& rng)
    : cfg_(cfg) {
  require(cfg.channels > 0, "sesa: channels must be positive");
  require(cfg.rate > 0.0 && cfg.rate <= 1.0, "sesa: rate must be in (0,1]");
  long c = cfg.channels;
  wq_ = ps.create(prefix + "wq", {c, c}, init_fan_in(rng, c));
  wk_ = ps.create(prefix + "wk", {c, c}, init_fan_in(rng, c));
  wv_ = ps.create(prefix + "wv", {c, c}, init_fan_in(rng, c));
  bv_ = ps.create(prefix + "bv", {c}, init_zeros());
  wo_ = ps.create(prefix + "wo", {c, c}, init_fan_in(rng, c));
  bo_ = ps.create(prefix + "bo", {c}, init_zeros());
}

long SESA::kv_rows(long n) const {
  long k = std::lround(cfg_.rate * static_cast<double>(n));
  if (k < 1) k = 1;
  if (k > n) k = n;
  return k;
}

Tensor SESA::forward(const Tensor& queries, const Tensor& positions) const {
  require(queries.ndim() == 2 && queries.dim(1) == cfg_.channels,
          "sesa: queries must be [N,C]");
  long n = queries.dim(0);
  require(positions.ndim() == 2 && positions.dim(0) == n,
          "sesa: positions must be [N,D] with one row per query");
  long k = kv_rows(n);
  Tensor sub = op::gather_rows(queries, farthest_point_sample(positions, k));
  Tensor q = op::linear(queries, wq_, Tensor());
  Tensor key = op::linear(sub, wk_, Tensor());
  Tensor val = op::linear(sub, wv_, bv_);
  Tensor scores = op::mul_scalar(op::matmul_nt(q, key),
                                 1.0 / std::sqrt(static_cast<double>(cfg_.channels)));
  Tensor mixed = op::matmul(op::softmax(scores, 1), val);
  last_kv_elems_ = 2 * k * cfg_.channels;
  return op::linear(mixed, wo_, bo_);
}

}  // namespace unigs
