#pragma once

#include <random>
#include <string>
#include <vector>

#include "unigs/params.hpp"
#include "unigs/tensor.hpp"

namespace unigs {

// Greedy farthest-point subset of pts [N,D]: starts at row 0, then always
// takes the row with the largest distance to the chosen set. Ties go to
// the lowest index, so the result is fully deterministic. Returned in
// selection order.
std::vector<long> farthest_point_sample(const Tensor& pts, long k);

struct SESAConfig {
  long channels = 64;
  double rate = 0.01;  // kept key/value rows as a fraction of N, in (0,1]
};

// Self-attention over gaussian queries where keys and values come from a
// farthest-point subset of the gaussians, cutting the score matrix from
// N*N to N*K. Queries attend over the subset; the subset selection is
// discrete, so positions receive no gradient through this module.
class SESA {
 public:
  SESA(ParamStore& ps, const std::string& prefix, const SESAConfig& cfg,
       std::mt19937_64& rng);

  // queries [N,C], positions [N,3]. Returns the attention update [N,C]
  // (no residual; callers add and normalize).
  Tensor forward(const Tensor& queries, const Tensor& positions) const;

  // kept rows for a given N: max(1, round(rate*N)), capped at N
  long kv_rows(long n) const;

  // doubles held by the downsampled key+value matrices in the last
  // forward call: 2 * kv_rows * channels
  long last_kv_elems() const { return last_kv_elems_; }

  const SESAConfig& config() const { return cfg_; }

 private:
  SESAConfig cfg_;
  Tensor wq_, wk_, wv_, bv_, wo_, bo_;
  mutable long last_kv_elems_ = 0;
};

}  // namespace unigs
