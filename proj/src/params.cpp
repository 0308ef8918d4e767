#include "unigs/params.hpp"

#include <cmath>

namespace unigs {

InitFn init_zeros() {
  return [](std::vector<double>& v) { std::fill(v.begin(), v.end(), 0.0); };
}

InitFn init_const(double c) {
  return [c](std::vector<double>& v) { std::fill(v.begin(), v.end(), c); };
}

InitFn init_normal(std::mt19937_64& rng, double std) {
  return [&rng, std](std::vector<double>& v) {
    std::normal_distribution<double> d(0.0, std);
    for (double& x : v) x = d(rng);
  };
}

InitFn init_uniform(std::mt19937_64& rng, double lo, double hi) {
  return [&rng, lo, hi](std::vector<double>& v) {
    std::uniform_real_distribution<double> d(lo, hi);
    for (double& x : v) x = d(rng);
  };
}

InitFn init_fan_in(std::mt19937_64& rng, long fan_in) {
  require(fan_in > 0, "init_fan_in: fan_in must be positive");
  double b = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return init_uniform(rng, -b, b);
}

Tensor ParamStore::create(const std::string& name, Shape shape,
                          const InitFn& init) {
  require(!map_.count(name), "ParamStore: duplicate parameter " + name);
  Tensor t = Tensor::zeros(std::move(shape), true);
  if (init) {
    init(t.data());
    round_to_storage(t.data());
  }
  order_.push_back(name);
  map_.emplace(name, t);
  return t;
}

Tensor ParamStore::at(const std::string& name) const {
  auto it = map_.find(name);
  require(it != map_.end(), "ParamStore: unknown parameter " + name);
  return it->second;
}

std::vector<Tensor> ParamStore::all() const {
  std::vector<Tensor> out;
  out.reserve(order_.size());
  for (const auto& n : order_) out.push_back(map_.at(n));
  return out;
}

void ParamStore::zero_grads() {
  for (auto& [k, t] : map_) {
    (void)k;
    const_cast<Tensor&>(t).zero_grad();
  }
}

long ParamStore::total_elems() const {
  long n = 0;
  for (const auto& [k, t] : map_) {
    (void)k;
    n += t.numel();
  }
  return n;
}

}  // namespace unigs
