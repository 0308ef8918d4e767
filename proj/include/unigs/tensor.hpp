#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "unigs/common.hpp"

namespace unigs {

using Shape = std::vector<long>;

long numel_of(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;

  std::vector<double>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

// Value-semantic handle over a shared node. Copies alias the same storage,
// which is what lets the tape capture its operands cheaply.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  long ndim() const { return static_cast<long>(n_->shape.size()); }
  long numel() const { return static_cast<long>(n_->data.size()); }
  long dim(long i) const { return n_->shape[static_cast<size_t>(i)]; }

  std::vector<double>& data() { return n_->data; }
  const std::vector<double>& data() const { return n_->data; }
  double item() const;
  double at(std::initializer_list<long> idx) const;

  bool requires_grad() const { return n_->requires_grad; }
  Tensor& set_requires_grad(bool rg) {
    n_->requires_grad = rg;
    return *this;
  }

  // Gradient of the last backward pass; zeros if never touched.
  std::vector<double> grad() const;
  std::vector<double>& grad_ref() { return n_->ensure_grad(); }
  bool has_grad() const { return !n_->grad.empty(); }
  void zero_grad() {
    if (!n_->grad.empty()) n_->grad.assign(n_->data.size(), 0.0);
  }

  Tensor detach() const;  // fresh node, same values, no grad
  Tensor clone() const { return detach(); }

  TensorNode* node() const { return n_.get(); }
  std::shared_ptr<TensorNode> node_ptr() const { return n_; }

 private:
  explicit Tensor(std::shared_ptr<TensorNode> n) : n_(std::move(n)) {}
  std::shared_ptr<TensorNode> n_;
};

std::ostream& operator<<(std::ostream& os, const Tensor& t);

// Ordered record of backward closures. Ops push one closure per executed op
// while a tape is active; backward seeds d(loss)/d(loss)=1 and replays the
// records in reverse, accumulating into node grads with +=.
class Tape {
 public:
  void record(std::function<void()> fn) { records_.push_back(std::move(fn)); }
  size_t size() const { return records_.size(); }

  // loss must be scalar. Leaves gradients (+=) in every requires_grad
  // tensor that participated. Single use: intermediate grads are not reset
  // between passes, so a second backward on the same records would compound
  // them; record a fresh tape instead. Accumulation across tapes is linear.
  void backward(const Tensor& loss);

  void clear() {
    records_.clear();
    used_ = false;
  }

 private:
  std::vector<std::function<void()>> records_;
  bool used_ = false;
};

Tape* active_tape();

class TapeScope {
 public:
  explicit TapeScope(Tape& t);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

// Suspends recording (evaluation paths, oracle recomputation).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* prev_;
};

inline bool tracing(const Tensor& a) {
  return active_tape() != nullptr && a.requires_grad();
}

}  // namespace unigs
