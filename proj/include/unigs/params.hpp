#pragma once

#include <functional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "unigs/tensor.hpp"

namespace unigs {

using InitFn = std::function<void(std::vector<double>&)>;

InitFn init_zeros();
InitFn init_const(double v);
InitFn init_normal(std::mt19937_64& rng, double std);
InitFn init_uniform(std::mt19937_64& rng, double lo, double hi);
// uniform +-1/sqrt(fan_in), the default for linear/conv weights
InitFn init_fan_in(std::mt19937_64& rng, long fan_in);

// Named trainable tensors in creation order. Creation order is the
// canonical parameter order everywhere (optimizer slots, checkpoints), so
// it must be deterministic.
class ParamStore {
 public:
  Tensor create(const std::string& name, Shape shape, const InitFn& init = {});
  bool has(const std::string& name) const { return map_.count(name) > 0; }
  Tensor at(const std::string& name) const;
  const std::vector<std::string>& names() const { return order_; }
  std::vector<Tensor> all() const;
  void zero_grads();
  long total_elems() const;

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, Tensor> map_;
};

}  // namespace unigs
