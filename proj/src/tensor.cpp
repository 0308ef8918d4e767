#include "unigs/tensor.hpp"

#include <sstream>

namespace unigs {

namespace {
DType g_dtype = DType::f64;
Tape* g_tape = nullptr;
Fault g_fault = Fault::none;
}  // namespace

DType default_dtype() { return g_dtype; }
void set_default_dtype(DType d) { g_dtype = d; }

void round_to_storage(std::vector<double>& v) {
  if (g_dtype == DType::f32) {
    for (double& x : v) x = static_cast<double>(static_cast<float>(x));
  }
}

Fault injected_fault() { return g_fault; }
void set_injected_fault(Fault f) { g_fault = f; }

long numel_of(const Shape& s) {
  long n = 1;
  for (long d : s) {
    require(d >= 0, "negative dimension in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  long count = numel_of(shape);
  n->shape = std::move(shape);
  n->data.assign(static_cast<size_t>(count), 0.0);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  double v = to_storage_scalar(value, g_dtype);
  for (double& x : t.data()) x = v;
  return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  long count = numel_of(shape);
  require(static_cast<long>(data.size()) == count,
          "from_data: " + std::to_string(data.size()) + " values for shape " +
              shape_str(shape));
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  round_to_storage(n->data);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({}, {value}, requires_grad);
}

double Tensor::item() const {
  require(numel() == 1, "item() on tensor of shape " + shape_str(shape()));
  return n_->data[0];
}

double Tensor::at(std::initializer_list<long> idx) const {
  require(static_cast<long>(idx.size()) == ndim(),
          "at(): rank mismatch for shape " + shape_str(shape()));
  long off = 0;
  long i = 0;
  for (long v : idx) {
    long d = dim(i);
    require(v >= 0 && v < d, "at(): index out of range");
    off = off * d + v;
    ++i;
  }
  return n_->data[static_cast<size_t>(off)];
}

std::vector<double> Tensor::grad() const {
  if (n_->grad.empty()) return std::vector<double>(n_->data.size(), 0.0);
  return n_->grad;
}

Tensor Tensor::detach() const {
  auto n = std::make_shared<TensorNode>();
  n->shape = n_->shape;
  n->data = n_->data;
  n->requires_grad = false;
  return Tensor(std::move(n));
}

std::ostream& operator<<(std::ostream& os, const Tensor& t) {
  if (!t.defined()) return os << "Tensor(undefined)";
  os << "Tensor" << shape_str(t.shape()) << "{";
  long n = t.numel();
  for (long i = 0; i < n && i < 16; ++i)
    os << (i ? ", " : "") << t.data()[static_cast<size_t>(i)];
  if (n > 16) os << ", ...";
  return os << "}";
}

void Tape::backward(const Tensor& loss) {
  require(loss.numel() == 1, "backward: loss must be a scalar");
  require(!used_, "backward: tape already consumed, record a fresh one");
  used_ = true;
  auto& g = loss.node()->ensure_grad();
  g[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
}

Tape* active_tape() { return g_tape; }

TapeScope::TapeScope(Tape& t) : prev_(g_tape) { g_tape = &t; }
TapeScope::~TapeScope() { g_tape = prev_; }

NoGradScope::NoGradScope() : prev_(g_tape) { g_tape = nullptr; }
NoGradScope::~NoGradScope() { g_tape = prev_; }

}  // namespace unigs
