#pragma once

#include <string>
#include <vector>

#include "unigs/tensor.hpp"

namespace unigs {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a fixed parameter list. Moment buffers live in
// slot order, so checkpoint round-trips must keep parameter order stable.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg);

  void step();
  void zero_grad();
  long steps() const { return t_; }
  double lr() const { return cfg_.lr; }
  void set_lr(double lr) { cfg_.lr = lr; }

  // Moment buffers as named tensors: <prefix>m.<slot>, <prefix>v.<slot>,
  // plus <prefix>step.
  std::vector<std::pair<std::string, Tensor>> export_state(
      const std::string& prefix) const;
  void import_state(const std::string& prefix,
                    const std::vector<std::pair<std::string, Tensor>>& state);

 private:
  AdamConfig cfg_;
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

// Returns the pre-clip global norm; rescales grads in place when above.
double clip_grad_norm(std::vector<Tensor>& params, double max_norm);

}  // namespace unigs
