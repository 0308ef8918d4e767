#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "doctest.h"
#include "unigs/gradcheck.hpp"
#include "unigs/ops.hpp"
#include "unigs/sesa.hpp"

using namespace unigs;
namespace op = unigs::ops;

namespace {

Tensor rand_tensor(Shape s, std::mt19937_64& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(s));
  std::normal_distribution<double> d(0.0, scale);
  for (double& v : t.data()) v = d(rng);
  return t;
}

// independent reference: recompute each greedy step by brute force
std::vector<long> fps_reference(const Tensor& pts, long k) {
  long n = pts.dim(0), d = pts.dim(1);
  auto dist2 = [&](long a, long b) {
    double s = 0;
    for (long j = 0; j < d; ++j) {
      double diff = pts.data()[static_cast<size_t>(a * d + j)] -
                    pts.data()[static_cast<size_t>(b * d + j)];
      s += diff * diff;
    }
    return s;
  };
  std::vector<long> sel = {0};
  while (static_cast<long>(sel.size()) < k) {
    long arg = -1;
    double most = -1.0;
    for (long i = 0; i < n; ++i) {
      if (std::find(sel.begin(), sel.end(), i) != sel.end()) continue;
      double nearest = std::numeric_limits<double>::infinity();
      for (long s : sel) nearest = std::min(nearest, dist2(i, s));
      if (nearest > most) {
        most = nearest;
        arg = i;
      }
    }
    sel.push_back(arg);
  }
  return sel;
}

}  // namespace

TEST_CASE("farthest point sampling matches the brute-force oracle") {
  std::mt19937_64 rng(21);
  for (long n = 1; n <= 64; ++n) {
    Tensor pts = rand_tensor({n, 3}, rng);
    for (long k : {1L, std::max(1L, n / 3), n}) {
      auto got = farthest_point_sample(pts, k);
      auto want = fps_reference(pts, k);
      REQUIRE(got.size() == static_cast<size_t>(k));
      for (size_t i = 0; i < got.size(); ++i) CHECK(got[i] == want[i]);
    }
  }
}

TEST_CASE("farthest point sampling hand cases and tie-breaks") {
  Tensor line = Tensor::from_data({3, 1}, {0.0, 10.0, 4.0});
  CHECK(farthest_point_sample(line, 3) == std::vector<long>{0, 1, 2});
  Tensor line2 = Tensor::from_data({3, 1}, {0.0, 4.0, 10.0});
  CHECK(farthest_point_sample(line2, 3) == std::vector<long>{0, 2, 1});

  // identical points: ties resolve to the lowest untaken index
  Tensor dup = Tensor::zeros({4, 3});
  CHECK(farthest_point_sample(dup, 4) == std::vector<long>{0, 1, 2, 3});
  auto twice_a = farthest_point_sample(line, 2);
  auto twice_b = farthest_point_sample(line, 2);
  CHECK(twice_a == twice_b);

  CHECK_THROWS_AS(farthest_point_sample(line, 0), ContractError);
  CHECK_THROWS_AS(farthest_point_sample(line, 4), ContractError);
  CHECK_THROWS_AS(farthest_point_sample(Tensor::zeros({3}), 1), ContractError);
}

TEST_CASE("selected rows are distinct and spread beats a prefix") {
  std::mt19937_64 rng(22);
  Tensor pts = rand_tensor({50, 3}, rng);
  auto sel = farthest_point_sample(pts, 12);
  std::set<long> uniq(sel.begin(), sel.end());
  CHECK(uniq.size() == sel.size());

  // min pairwise distance of the fps subset should not be worse than the
  // first-12-rows subset
  auto min_pair = [&](const std::vector<long>& ids) {
    double best = std::numeric_limits<double>::infinity();
    for (size_t a = 0; a < ids.size(); ++a)
      for (size_t b = a + 1; b < ids.size(); ++b) {
        double s = 0;
        for (long j = 0; j < 3; ++j) {
          double diff = pts.at({ids[a], j}) - pts.at({ids[b], j});
          s += diff * diff;
        }
        best = std::min(best, s);
      }
    return best;
  };
  std::vector<long> prefix;
  for (long i = 0; i < 12; ++i) prefix.push_back(i);
  CHECK(min_pair(sel) >= min_pair(prefix));
}

TEST_CASE("kept row count follows the rate") {
  ParamStore ps;
  std::mt19937_64 rng(23);
  SESAConfig cfg;
  cfg.channels = 8;
  cfg.rate = 0.01;
  SESA s(ps, "s.", cfg, rng);
  CHECK(s.kv_rows(19600) == 196);
  CHECK(s.kv_rows(10) == 1);    // rounds to zero, floored at one
  CHECK(s.kv_rows(1) == 1);
  CHECK(s.kv_rows(151) == 2);   // 1.51 rounds up

  SESAConfig half = cfg;
  half.rate = 0.5;
  SESA s2(ps, "s2.", half, rng);
  CHECK(s2.kv_rows(100) == 50);
  CHECK(s2.kv_rows(101) == 51);  // .5 rounds away from zero

  SESAConfig full = cfg;
  full.rate = 1.0;
  SESA s3(ps, "s3.", full, rng);
  CHECK(s3.kv_rows(37) == 37);

  CHECK_THROWS_AS(SESA(ps, "bad.", SESAConfig{8, 0.0}, rng), ContractError);
  CHECK_THROWS_AS(SESA(ps, "bad2.", SESAConfig{8, 1.5}, rng), ContractError);
}

TEST_CASE("key/value footprint scales linearly with the rate") {
  std::mt19937_64 rng(24);
  Tensor q = rand_tensor({200, 8}, rng, 0.5);
  Tensor pos = rand_tensor({200, 3}, rng);
  long elems_at[2];
  double rates[2] = {0.05, 0.10};
  for (int i = 0; i < 2; ++i) {
    ParamStore ps;
    std::mt19937_64 prng(25);
    SESAConfig cfg;
    cfg.channels = 8;
    cfg.rate = rates[i];
    SESA s(ps, "s.", cfg, prng);
    (void)s.forward(q, pos);
    elems_at[i] = s.last_kv_elems();
  }
  CHECK(elems_at[0] == 2 * 10 * 8);
  CHECK(elems_at[1] == 2 * elems_at[0]);
}

TEST_CASE("rate one reproduces dense self-attention") {
  ParamStore ps;
  std::mt19937_64 rng(26);
  SESAConfig cfg;
  cfg.channels = 12;
  cfg.rate = 1.0;
  SESA s(ps, "s.", cfg, rng);
  std::mt19937_64 drng(27);
  Tensor q = rand_tensor({40, 12}, drng, 0.8);
  Tensor pos = rand_tensor({40, 3}, drng);
  Tensor got = s.forward(q, pos);

  // dense reference with the same weights, keys/values in natural order
  Tensor qq = op::linear(q, ps.at("s.wq"), Tensor());
  Tensor kk = op::linear(q, ps.at("s.wk"), Tensor());
  Tensor vv = op::linear(q, ps.at("s.wv"), ps.at("s.bv"));
  Tensor attn = op::softmax(
      op::mul_scalar(op::matmul_nt(qq, kk), 1.0 / std::sqrt(12.0)), 1);
  Tensor want = op::linear(op::matmul(attn, vv), ps.at("s.wo"), ps.at("s.bo"));
  double worst = 0;
  for (long i = 0; i < got.numel(); ++i)
    worst = std::max(worst, std::fabs(got.data()[static_cast<size_t>(i)] -
                                      want.data()[static_cast<size_t>(i)]));
  CHECK(worst < 1e-10);
}

TEST_CASE("deterministic output and no gradient into positions") {
  ParamStore ps;
  std::mt19937_64 rng(28);
  SESAConfig cfg;
  cfg.channels = 8;
  cfg.rate = 0.3;
  SESA s(ps, "s.", cfg, rng);
  std::mt19937_64 drng(29);
  Tensor q = rand_tensor({30, 8}, drng, 0.5);
  Tensor pos = rand_tensor({30, 3}, drng);
  Tensor a = s.forward(q, pos);
  Tensor b = s.forward(q, pos);
  for (long i = 0; i < a.numel(); ++i)
    CHECK(a.data()[static_cast<size_t>(i)] == b.data()[static_cast<size_t>(i)]);

  pos.node_ptr()->requires_grad = true;
  q.node_ptr()->requires_grad = true;
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor out = s.forward(q, pos);
    tape.backward(op::sum(op::mul(out, out)));
  }
  CHECK(!pos.has_grad());
  bool any = false;
  for (double v : q.grad()) any = any || v != 0.0;
  CHECK(any);
}

TEST_CASE("finite differences confirm query and weight gradients") {
  ParamStore ps;
  std::mt19937_64 rng(30);
  SESAConfig cfg;
  cfg.channels = 6;
  cfg.rate = 0.4;
  SESA s(ps, "s.", cfg, rng);
  std::mt19937_64 drng(31);
  Tensor q = rand_tensor({12, 6}, drng, 0.6);
  Tensor pos = rand_tensor({12, 3}, drng);
  q.node_ptr()->requires_grad = true;
  GradCheckOpts o;
  o.tol = 1e-5;
  o.max_entries = 12;
  auto rep = grad_check(
      [&](const std::vector<Tensor>&) {
        Tensor out = s.forward(q, pos);
        return op::mean(op::mul(out, out));
      },
      {q, ps.at("s.wq"), ps.at("s.wk"), ps.at("s.wv"), ps.at("s.bv"),
       ps.at("s.wo"), ps.at("s.bo")},
      o);
  INFO(rep.worst);
  CHECK(rep.pass);
}
