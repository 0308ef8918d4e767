#include "unigs/adam.hpp"

#include <cmath>

namespace unigs {

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg)
    : cfg_(cfg), params_(std::move(params)) {
  for (const Tensor& p : params_) {
    m_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
    v_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
  }
}

void Adam::step() {
  ++t_;
  double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) continue;  // untouched this step, moments unchanged
    const auto& g = p.grad_ref();
    auto& m = m_[i];
    auto& v = v_[i];
    auto& x = p.data();
    for (size_t j = 0; j < x.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      double mh = m[j] / c1;
      double vh = v[j] / c2;
      x[j] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
    }
    round_to_storage(x);
    round_to_storage(m);
    round_to_storage(v);
  }
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

std::vector<std::pair<std::string, Tensor>> Adam::export_state(
    const std::string& prefix) const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (size_t i = 0; i < params_.size(); ++i) {
    Shape s = params_[i].shape();
    out.emplace_back(prefix + "m." + std::to_string(i),
                     Tensor::from_data(s, m_[i]));
    out.emplace_back(prefix + "v." + std::to_string(i),
                     Tensor::from_data(s, v_[i]));
  }
  out.emplace_back(prefix + "step",
                   Tensor::from_data({}, {static_cast<double>(t_)}));
  return out;
}

void Adam::import_state(
    const std::string& prefix,
    const std::vector<std::pair<std::string, Tensor>>& state) {
  size_t found = 0;
  for (const auto& [name, t] : state) {
    if (name.rfind(prefix, 0) != 0) continue;
    std::string rest = name.substr(prefix.size());
    if (rest == "step") {
      t_ = static_cast<long>(t.item());
      ++found;
      continue;
    }
    bool is_m = rest.rfind("m.", 0) == 0;
    bool is_v = rest.rfind("v.", 0) == 0;
    if (!is_m && !is_v) continue;
    size_t slot = std::stoul(rest.substr(2));
    require(slot < params_.size(), "Adam: state slot out of range: " + name);
    auto& dst = is_m ? m_[slot] : v_[slot];
    require(t.numel() == static_cast<long>(dst.size()),
            "Adam: state size mismatch for " + name);
    dst = t.data();
    ++found;
  }
  require(found == 2 * params_.size() + 1,
          "Adam: incomplete optimizer state under prefix " + prefix);
}

double clip_grad_norm(std::vector<Tensor>& params, double max_norm) {
  double sq = 0.0;
  for (Tensor& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad_ref()) sq += g * g;
  }
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    double s = max_norm / norm;
    for (Tensor& p : params) {
      if (!p.has_grad()) continue;
      for (double& g : p.grad_ref()) g *= s;
    }
  }
  return norm;
}

}  // namespace unigs
