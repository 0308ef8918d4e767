#pragma once

#include <functional>
#include <string>
#include <vector>

#include "unigs/tensor.hpp"

namespace unigs {

struct GradCheckReport {
  bool pass = true;
  double max_rel_err = 0.0;
  long checked = 0;
  long failed = 0;
  std::string worst;  // "input 2 entry 17: analytic=..., fd=..."
};

struct GradCheckOpts {
  double h = 1e-6;
  double tol = 1e-5;
  // rel err denominator is max(|analytic|, |fd|, floor)
  double denom_floor = 1e-3;
  // cap on perturbed entries per input; <0 checks all, otherwise an evenly
  // spread deterministic subset
  long max_entries = -1;
};

// f maps the given inputs to a scalar loss. Analytic gradients come from one
// taped backward pass; the numeric side is a central difference evaluated
// with no tape active, so the two paths share nothing but f itself.
GradCheckReport grad_check(
    const std::function<Tensor(const std::vector<Tensor>&)>& f,
    const std::vector<Tensor>& inputs, const GradCheckOpts& opts = {});

}  // namespace unigs
