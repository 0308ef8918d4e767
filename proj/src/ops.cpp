#include "unigs/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace unigs {
namespace ops {

namespace {

using NodeP = std::shared_ptr<TensorNode>;

bool rec1(const Tensor& a) { return active_tape() && a.requires_grad(); }
bool rec2(const Tensor& a, const Tensor& b) {
  return active_tape() && (a.requires_grad() || b.requires_grad());
}

long norm_axis(long axis, long ndim, const char* op) {
  if (axis < 0) axis += ndim;
  require(axis >= 0 && axis < ndim, std::string(op) + ": axis out of range");
  return axis;
}

// outer * mid * inner decomposition around `axis`
void omi(const Shape& s, long axis, long& outer, long& mid, long& inner) {
  outer = 1;
  for (long i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];
  mid = s[static_cast<size_t>(axis)];
  inner = 1;
  for (long i = axis + 1; i < static_cast<long>(s.size()); ++i)
    inner *= s[static_cast<size_t>(i)];
}

struct Bcast {
  Shape out;
  std::vector<long> sa, sb;  // per out-dim strides into a / b (0 = broadcast)
  long n = 0;
  bool same = false;
};

std::vector<long> contiguous_strides(const Shape& s) {
  std::vector<long> st(s.size(), 0);
  long acc = 1;
  for (long i = static_cast<long>(s.size()) - 1; i >= 0; --i) {
    st[static_cast<size_t>(i)] = acc;
    acc *= s[static_cast<size_t>(i)];
  }
  return st;
}

Bcast broadcast_plan(const Shape& a, const Shape& b, const char* op) {
  Bcast p;
  if (a == b) {
    p.out = a;
    p.n = numel_of(a);
    p.same = true;
    return p;
  }
  long nd = std::max<long>(a.size(), b.size());
  p.out.assign(static_cast<size_t>(nd), 1);
  for (long i = 0; i < nd; ++i) {
    long da = i < static_cast<long>(a.size())
                  ? a[a.size() - 1 - static_cast<size_t>(i)]
                  : 1;
    long db = i < static_cast<long>(b.size())
                  ? b[b.size() - 1 - static_cast<size_t>(i)]
                  : 1;
    require(da == db || da == 1 || db == 1,
            std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                shape_str(b));
    p.out[static_cast<size_t>(nd - 1 - i)] = std::max(da, db);
  }
  p.n = numel_of(p.out);
  auto sta = contiguous_strides(a);
  auto stb = contiguous_strides(b);
  p.sa.assign(static_cast<size_t>(nd), 0);
  p.sb.assign(static_cast<size_t>(nd), 0);
  for (long i = 0; i < nd; ++i) {
    long ia = static_cast<long>(a.size()) - nd + i;
    long ib = static_cast<long>(b.size()) - nd + i;
    if (ia >= 0 && a[static_cast<size_t>(ia)] != 1)
      p.sa[static_cast<size_t>(i)] = sta[static_cast<size_t>(ia)];
    if (ib >= 0 && b[static_cast<size_t>(ib)] != 1)
      p.sb[static_cast<size_t>(i)] = stb[static_cast<size_t>(ib)];
  }
  return p;
}

// Walks output linear indices together with offsets into both operands.
template <class F>
void bcast_for_each(const Bcast& p, F&& fn) {
  if (p.same) {
    for (long i = 0; i < p.n; ++i) fn(i, i, i);
    return;
  }
  long nd = static_cast<long>(p.out.size());
  std::vector<long> coord(static_cast<size_t>(nd), 0);
  long oa = 0, ob = 0;
  for (long i = 0; i < p.n; ++i) {
    fn(i, oa, ob);
    for (long d = nd - 1; d >= 0; --d) {
      auto du = static_cast<size_t>(d);
      if (++coord[du] < p.out[du]) {
        oa += p.sa[du];
        ob += p.sb[du];
        break;
      }
      oa -= p.sa[du] * (p.out[du] - 1);
      ob -= p.sb[du] * (p.out[du] - 1);
      coord[du] = 0;
    }
  }
}

template <class FwdF, class BwdF>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, FwdF fwd,
                 BwdF bwd) {
  Bcast p = broadcast_plan(a.shape(), b.shape(), name);
  Tensor out = Tensor::zeros(p.out, rec2(a, b));
  {
    const auto& ad = a.data();
    const auto& bd = b.data();
    auto& od = out.data();
    bcast_for_each(p, [&](long i, long oa, long ob) {
      od[static_cast<size_t>(i)] =
          fwd(ad[static_cast<size_t>(oa)], bd[static_cast<size_t>(ob)]);
    });
    round_to_storage(od);
  }
  if (out.requires_grad()) {
    NodeP an = a.node_ptr(), bn = b.node_ptr(), on = out.node_ptr();
    bool ga = a.requires_grad(), gb = b.requires_grad();
    active_tape()->record([an, bn, on, p, ga, gb, bwd]() {
      if (on->grad.empty()) return;
      const auto& go = on->grad;
      double* pa = nullptr;
      double* pb = nullptr;
      if (ga) pa = an->ensure_grad().data();
      if (gb) pb = bn->ensure_grad().data();
      const auto& ad = an->data;
      const auto& bd = bn->data;
      bcast_for_each(p, [&](long i, long oa, long ob) {
        double g = go[static_cast<size_t>(i)];
        if (g == 0.0) return;
        double da, db;
        bwd(ad[static_cast<size_t>(oa)], bd[static_cast<size_t>(ob)], g, da,
            db);
        if (pa) pa[oa] += da;
        if (pb) pb[ob] += db;
      });
    });
  }
  return out;
}

template <class FwdF, class BwdF>
Tensor unary_op(const Tensor& a, const char* name, FwdF fwd, BwdF bwd) {
  (void)name;
  Tensor out = Tensor::zeros(a.shape(), rec1(a));
  const auto& ad = a.data();
  auto& od = out.data();
  long n = a.numel();
  for (long i = 0; i < n; ++i)
    od[static_cast<size_t>(i)] = fwd(ad[static_cast<size_t>(i)]);
  round_to_storage(od);
  if (out.requires_grad()) {
    NodeP an = a.node_ptr(), on = out.node_ptr();
    active_tape()->record([an, on, n, bwd]() {
      if (on->grad.empty()) return;
      const auto& go = on->grad;
      auto& ga = an->ensure_grad();
      const auto& ad = an->data;
      const auto& od = on->data;
      for (long i = 0; i < n; ++i) {
        auto u = static_cast<size_t>(i);
        if (go[u] != 0.0) ga[u] += bwd(ad[u], od[u]) * go[u];
      }
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double g, double& da, double& db) {
        da = g;
        db = g;
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double g, double& da, double& db) {
        da = g;
        db = -g;
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double x, double y, double g, double& da, double& db) {
        da = g * y;
        db = g * x;
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double x, double y, double g, double& da, double& db) {
        da = g / y;
        db = -g * x / (y * y);
      });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary_op(
      a, "add_scalar", [s](double x) { return x + s; },
      [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double s) {
  return unary_op(
      a, "mul_scalar", [s](double x) { return x * s; },
      [s](double, double) { return s; });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor relu(const Tensor& a) {
  return unary_op(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a, "sigmoid",
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
  return unary_op(
      a, "exp", [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary_op(
      a, "log", [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
  return unary_op(
      a, "sqrt", [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  require(lo <= hi, "clamp: lo > hi");
  return unary_op(
      a, "clamp",
      [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor reshape(const Tensor& a, Shape shape) {
  // one dim may be -1 and is inferred
  long known = 1;
  long infer = -1;
  for (size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      require(infer < 0, "reshape: more than one -1");
      infer = static_cast<long>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0) {
    require(known > 0 && a.numel() % known == 0,
            "reshape: cannot infer dimension");
    shape[static_cast<size_t>(infer)] = a.numel() / known;
  }
  require(numel_of(shape) == a.numel(),
          "reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  Tensor out = Tensor::from_data(std::move(shape), a.data(), rec1(a));
  if (out.requires_grad()) {
    NodeP an = a.node_ptr(), on = out.node_ptr();
    active_tape()->record([an, on]() {
      if (on->grad.empty()) return;
      auto& ga = an->ensure_grad();
      const auto& go = on->grad;
      for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    });
  }
  return out;
}

Tensor slice(const Tensor& a, long axis, long start, long len) {
  axis = norm_axis(axis, a.ndim(), "slice");
  long outer, mid, inner;
  omi(a.shape(), axis, outer, mid, inner);
  require(start >= 0 && len >= 0 && start + len <= mid,
          "slice: range [" + std::to_string(start) + "," +
              std::to_string(start + len) + ") outside axis of size " +
              std::to_string(mid));
  Shape os = a.shape();
  os[static_cast<size_t>(axis)] = len;
  Tensor out = Tensor::zeros(os, rec1(a));
  const auto& ad = a.data();
  auto& od = out.data();
  for (long o = 0; o < outer; ++o)
    for (long j = 0; j < len; ++j)
      std::memcpy(&od[static_cast<size_t>((o * len + j) * inner)],
                  &ad[static_cast<size_t>((o * mid + start + j) * inner)],
                  sizeof(double) * static_cast<size_t>(inner));
  if (out.requires_grad()) {
    NodeP an = a.node_ptr(), on = out.node_ptr();
    active_tape()->record([an, on, outer, mid, inner, start, len]() {
      if (on->grad.empty()) return;
      auto& ga = an->ensure_grad();
      const auto& go = on->grad;
      for (long o = 0; o < outer; ++o)
        for (long j = 0; j < len; ++j)
          for (long i = 0; i < inner; ++i)
            ga[static_cast<size_t>((o * mid + start + j) * inner + i)] +=
                go[static_cast<size_t>((o * len + j) * inner + i)];
    });
  }
  return out;
}

Tensor select(const Tensor& a, long axis, long index) {
  axis = norm_axis(axis, a.ndim(), "select");
  Tensor s = slice(a, axis, index, 1);
  Shape os;
  for (long i = 0; i < a.ndim(); ++i)
    if (i != axis) os.push_back(a.dim(i));
  return reshape(s, os);
}

Tensor concat(const std::vector<Tensor>& parts, long axis) {
  require(!parts.empty(), "concat: no inputs");
  const Shape& s0 = parts[0].shape();
  axis = norm_axis(axis, parts[0].ndim(), "concat");
  long total = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    require(p.ndim() == parts[0].ndim(), "concat: rank mismatch");
    for (long d = 0; d < p.ndim(); ++d)
      require(d == axis || p.dim(d) == s0[static_cast<size_t>(d)],
              "concat: shape mismatch " + shape_str(p.shape()) + " vs " +
                  shape_str(s0));
    total += p.dim(axis);
    rg = rg || rec1(p);
  }
  Shape os = s0;
  os[static_cast<size_t>(axis)] = total;
  Tensor out = Tensor::zeros(os, rg);
  long outer, mid, inner;
  omi(os, axis, outer, mid, inner);
  auto& od = out.data();
  long off = 0;
  for (const Tensor& p : parts) {
    long pm = p.dim(axis);
    const auto& pd = p.data();
    for (long o = 0; o < outer; ++o)
      std::memcpy(&od[static_cast<size_t>((o * mid + off) * inner)],
                  &pd[static_cast<size_t>(o * pm * inner)],
                  sizeof(double) * static_cast<size_t>(pm * inner));
    off += pm;
  }
  if (out.requires_grad()) {
    std::vector<NodeP> ins;
    std::vector<long> mids, offs;
    long o2 = 0;
    for (const Tensor& p : parts) {
      ins.push_back(p.requires_grad() ? p.node_ptr() : nullptr);
      mids.push_back(p.dim(axis));
      offs.push_back(o2);
      o2 += p.dim(axis);
    }
    NodeP on = out.node_ptr();
    active_tape()->record([ins, mids, offs, on, outer, mid, inner]() {
      if (on->grad.empty()) return;
      const auto& go = on->grad;
      for (size_t k = 0; k < ins.size(); ++k) {
        if (!ins[k]) continue;
        auto& ga = ins[k]->ensure_grad();
        for (long o = 0; o < outer; ++o)
          for (long j = 0; j < mids[k]; ++j)
            for (long i = 0; i < inner; ++i)
              ga[static_cast<size_t>((o * mids[k] + j) * inner + i)] +=
                  go[static_cast<size_t>((o * mid + offs[k] + j) * inner + i)];
      }
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& a, const std::vector<long>& indices) {
  require(a.ndim() >= 1, "gather_rows: rank 0 input");
  long n = a.dim(0);
  long inner = a.numel() / std::max<long>(n, 1);
  for (long idx : indices)
    require(idx >= 0 && idx < n, "gather_rows: index " + std::to_string(idx) +
                                     " out of range [0," + std::to_string(n) +
                                     ")");
  Shape os = a.shape();
  os[0] = static_cast<long>(indices.size());
  Tensor out = Tensor::zeros(os, rec1(a));
  const auto& ad = a.data();
  auto& od = out.data();
  for (size_t k = 0; k < indices.size(); ++k)
    std::memcpy(&od[k * static_cast<size_t>(inner)],
                &ad[static_cast<size_t>(indices[k] * inner)],
                sizeof(double) * static_cast<size_t>(inner));
  if (out.requires_grad()) {
    NodeP an = a.node_ptr(), on = out.node_ptr();
    std::vector<long> idx = indices;
    active_tape()->record([an, on, idx, inner]() {
      if (on->grad.empty()) return;
      auto& ga = an->ensure_grad();
      const auto& go = on->grad;
      for (size_t k = 0; k < idx.size(); ++k)
        for (long i = 0; i < inner; ++i)
          ga[static_cast<size_t>(idx[k] * inner + i)] +=
              go[k * static_cast<size_t>(inner) + static_cast<size_t>(i)];
    });
  }
  return out;
}

Tensor sum(const Tensor& a) {
  Tensor out = Tensor::zeros({}, rec1(a));
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  out.data()[0] = acc;
  round_to_storage(out.data());
  if (out.requires_grad()) {
    NodeP an = a.node_ptr(), on = out.node_ptr();
    active_tape()->record([an, on]() {
      if (on->grad.empty()) return;
      double g = on->grad[0];
      if (g == 0.0) return;
      auto& ga = an->ensure_grad();
      for (double& v : ga) v += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& a) {
  require(a.numel() > 0, "mean: empty tensor");
  Tensor s = sum(a);
  return mul_scalar(s, 1.0 / static_cast<double>(a.numel()));
}

Tensor sum_axis(const Tensor& a, long axis, bool keepdim) {
  axis = norm_axis(axis, a.ndim(), "sum_axis");
  long outer, mid, inner;
  omi(a.shape(), axis, outer, mid, inner);
  Shape os;
  for (long i = 0; i < a.ndim(); ++i) {
    if (i == axis) {
      if (keepdim) os.push_back(1);
    } else {
      os.push_back(a.dim(i));
    }
  }
  Tensor out = Tensor::zeros(os, rec1(a));
  const auto& ad = a.data();
  auto& od = out.data();
  for (long o = 0; o < outer; ++o)
    for (long j = 0; j < mid; ++j)
      for (long i = 0; i < inner; ++i)
        od[static_cast<size_t>(o * inner + i)] +=
            ad[static_cast<size_t>((o * mid + j) * inner + i)];
  round_to_storage(od);
  if (out.requires_grad()) {
    NodeP an = a.node_ptr(), on = out.node_ptr();
    active_tape()->record([an, on, outer, mid, inner]() {
      if (on->grad.empty()) return;
      auto& ga = an->ensure_grad();
      const auto& go = on->grad;
      for (long o = 0; o < outer; ++o)
        for (long j = 0; j < mid; ++j)
          for (long i = 0; i < inner; ++i)
            ga[static_cast<size_t>((o * mid + j) * inner + i)] +=
                go[static_cast<size_t>(o * inner + i)];
    });
  }
  return out;
}

Tensor transpose2(const Tensor& a) {
  require(a.ndim() == 2, "transpose2: input must be 2-D");
  long m = a.dim(0), n = a.dim(1);
  Tensor out = Tensor::zeros({n, m}, rec1(a));
  const double* ad = a.data().data();
  double* od = out.data().data();
  for (long i = 0; i < m; ++i)
    for (long j = 0; j < n; ++j) od[j * m + i] = ad[i * n + j];
  if (out.requires_grad()) {
    NodeP an = a.node_ptr(), on = out.node_ptr();
    active_tape()->record([an, on, m, n]() {
      if (on->grad.empty()) return;
      const auto& go = on->grad;
      auto& ga = an->ensure_grad();
      for (long i = 0; i < m; ++i)
        for (long j = 0; j < n; ++j)
          ga[static_cast<size_t>(i * n + j)] += go[static_cast<size_t>(j * m + i)];
    });
  }
  return out;
}

Tensor sum_ordered_axis0(const Tensor& a) {
  require(a.ndim() >= 1, "sum_ordered_axis0: input must have a leading axis");
  long k = a.dim(0);
  Shape os(a.shape().begin() + 1, a.shape().end());
  Tensor out = Tensor::zeros(os, rec1(a));
  long inner = out.numel();
  const double* ad = a.data().data();
  double* od = out.data().data();
  std::vector<double> vals(static_cast<size_t>(k));
  for (long j = 0; j < inner; ++j) {
    for (long i = 0; i < k; ++i)
      vals[static_cast<size_t>(i)] = ad[static_cast<size_t>(i * inner + j)];
    std::sort(vals.begin(), vals.end());
    double s = 0;
    for (double v : vals) s += v;
    od[static_cast<size_t>(j)] = s;
  }
  round_to_storage(out.data());
  if (out.requires_grad()) {
    NodeP an = a.node_ptr(), on = out.node_ptr();
    active_tape()->record([an, on, k, inner]() {
      if (on->grad.empty()) return;
      const auto& go = on->grad;
      auto& ga = an->ensure_grad();
      for (long i = 0; i < k; ++i)
        for (long j = 0; j < inner; ++j)
          ga[static_cast<size_t>(i * inner + j)] += go[static_cast<size_t>(j)];
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b) {
  require(W.ndim() == 2, "linear: W must be [Cin,Cout]");
  long cin = W.dim(0), cout = W.dim(1);
  require(x.ndim() >= 1 && x.dim(x.ndim() - 1) == cin,
          "linear: x " + shape_str(x.shape()) + " vs W " +
              shape_str(W.shape()));
  bool with_b = b.defined();
  if (with_b)
    require(b.numel() == cout, "linear: bias size " +
                                   std::to_string(b.numel()) + " != " +
                                   std::to_string(cout));
  long rows = x.numel() / cin;
  Shape os = x.shape();
  os.back() = cout;
  bool rg = rec1(x) || rec1(W) || (with_b && rec1(b));
  Tensor out = Tensor::zeros(os, active_tape() && rg);
  const double* xd = x.data().data();
  const double* wd = W.data().data();
  double* od = out.data().data();
  for (long r = 0; r < rows; ++r) {
    double* orow = od + r * cout;
    if (with_b) {
      const double* bd = b.data().data();
      for (long j = 0; j < cout; ++j) orow[j] = bd[j];
    }
    const double* xrow = xd + r * cin;
    for (long k = 0; k < cin; ++k) {
      double xv = xrow[k];
      if (xv == 0.0) continue;
      const double* wrow = wd + k * cout;
      for (long j = 0; j < cout; ++j) orow[j] += xv * wrow[j];
    }
  }
  round_to_storage(out.data());
  if (out.requires_grad()) {
    NodeP xn = x.node_ptr(), wn = W.node_ptr(), on = out.node_ptr();
    NodeP bn = with_b ? b.node_ptr() : nullptr;
    bool gx = x.requires_grad(), gw = W.requires_grad();
    bool gb = with_b && b.requires_grad();
    active_tape()->record([xn, wn, bn, on, rows, cin, cout, gx, gw, gb]() {
      if (on->grad.empty()) return;
      const double* go = on->grad.data();
      const double* xd = xn->data.data();
      const double* wd = wn->data.data();
      double* gxd = gx ? xn->ensure_grad().data() : nullptr;
      double* gwd = gw ? wn->ensure_grad().data() : nullptr;
      double* gbd = gb ? bn->ensure_grad().data() : nullptr;
      for (long r = 0; r < rows; ++r) {
        const double* grow = go + r * cout;
        const double* xrow = xd + r * cin;
        if (gxd) {
          double* gxrow = gxd + r * cin;
          for (long k = 0; k < cin; ++k) {
            const double* wrow = wd + k * cout;
            double acc = 0.0;
            for (long j = 0; j < cout; ++j) acc += grow[j] * wrow[j];
            gxrow[k] += acc;
          }
        }
        if (gwd) {
          for (long k = 0; k < cin; ++k) {
            double xv = xrow[k];
            if (xv == 0.0) continue;
            double* gwrow = gwd + k * cout;
            for (long j = 0; j < cout; ++j) gwrow[j] += xv * grow[j];
          }
        }
        if (gbd)
          for (long j = 0; j < cout; ++j) gbd[j] += grow[j];
      }
    });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.ndim() == 2 && b.ndim() == 2 && a.dim(1) == b.dim(0),
          "matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  return linear(a, b, Tensor());
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require(a.ndim() == 2 && b.ndim() == 2 && a.dim(1) == b.dim(1),
          "matmul_nt: " + shape_str(a.shape()) + " x " +
              shape_str(b.shape()) + "^T");
  long m = a.dim(0), k = a.dim(1), n = b.dim(0);
  Tensor out = Tensor::zeros({m, n}, rec2(a, b));
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  double* od = out.data().data();
  for (long i = 0; i < m; ++i) {
    const double* arow = ad + i * k;
    for (long j = 0; j < n; ++j) {
      const double* brow = bd + j * k;
      double acc = 0.0;
      for (long t = 0; t < k; ++t) acc += arow[t] * brow[t];
      od[i * n + j] = acc;
    }
  }
  round_to_storage(out.data());
  if (out.requires_grad()) {
    NodeP an = a.node_ptr(), bn = b.node_ptr(), on = out.node_ptr();
    bool ga = a.requires_grad(), gb = b.requires_grad();
    active_tape()->record([an, bn, on, m, n, k, ga, gb]() {
      if (on->grad.empty()) return;
      const double* go = on->grad.data();
      const double* ad = an->data.data();
      const double* bd = bn->data.data();
      double* gad = ga ? an->ensure_grad().data() : nullptr;
      double* gbd = gb ? bn->ensure_grad().data() : nullptr;
      for (long i = 0; i < m; ++i)
        for (long j = 0; j < n; ++j) {
          double g = go[i * n + j];
          if (g == 0.0) continue;
          if (gad)
            for (long t = 0; t < k; ++t) gad[i * k + t] += g * bd[j * k + t];
          if (gbd)
            for (long t = 0; t < k; ++t) gbd[j * k + t] += g * ad[i * k + t];
        }
    });
  }
  return out;
}

Tensor softmax(const Tensor& a, long axis) {
  axis = norm_axis(axis, a.ndim(), "softmax");
  if (injected_fault() == Fault::softmax_axis && a.ndim() >= 2)
    axis = axis == 0 ? a.ndim() - 1 : axis - 1;
  long outer, mid, inner;
  omi(a.shape(), axis, outer, mid, inner);
  Tensor out = Tensor::zeros(a.shape(), rec1(a));
  const auto& ad = a.data();
  auto& od = out.data();
  for (long o = 0; o < outer; ++o)
    for (long i = 0; i < inner; ++i) {
      long base = o * mid * inner + i;
      double mx = -1e300;
      for (long j = 0; j < mid; ++j)
        mx = std::max(mx, ad[static_cast<size_t>(base + j * inner)]);
      double z = 0.0;
      for (long j = 0; j < mid; ++j) {
        double e = std::exp(ad[static_cast<size_t>(base + j * inner)] - mx);
        od[static_cast<size_t>(base + j * inner)] = e;
        z += e;
      }
      for (long j = 0; j < mid; ++j)
        od[static_cast<size_t>(base + j * inner)] /= z;
    }
  round_to_storage(od);
  if (out.requires_grad()) {
    NodeP an = a.node_ptr(), on = out.node_ptr();
    active_tape()->record([an, on, outer, mid, inner]() {
      if (on->grad.empty()) return;
      const auto& go = on->grad;
      const auto& od = on->data;
      auto& ga = an->ensure_grad();
      for (long o = 0; o < outer; ++o)
        for (long i = 0; i < inner; ++i) {
          long base = o * mid * inner + i;
          double dot = 0.0;
          for (long j = 0; j < mid; ++j) {
            auto u = static_cast<size_t>(base + j * inner);
            dot += go[u] * od[u];
          }
          for (long j = 0; j < mid; ++j) {
            auto u = static_cast<size_t>(base + j * inner);
            ga[u] += od[u] * (go[u] - dot);
          }
        }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  require(x.ndim() >= 1, "layer_norm: rank 0 input");
  long c = x.dim(x.ndim() - 1);
  require(gamma.numel() == c && beta.numel() == c,
          "layer_norm: gamma/beta must have " + std::to_string(c) +
              " elements");
  long rows = x.numel() / c;
  bool rg = rec1(x) || rec1(gamma) || rec1(beta);
  Tensor out = Tensor::zeros(x.shape(), active_tape() && rg);
  std::vector<double> xhat(static_cast<size_t>(rows * c));
  std::vector<double> rstd(static_cast<size_t>(rows));
  const double* xd = x.data().data();
  const double* gd = gamma.data().data();
  const double* bd = beta.data().data();
  double* od = out.data().data();
  for (long r = 0; r < rows; ++r) {
    const double* xr = xd + r * c;
    double mu = 0.0;
    for (long j = 0; j < c; ++j) mu += xr[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (long j = 0; j < c; ++j) {
      double d = xr[j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(c);
    double inv = 1.0 / std::sqrt(var + eps);
    rstd[static_cast<size_t>(r)] = inv;
    for (long j = 0; j < c; ++j) {
      double xh = (xr[j] - mu) * inv;
      xhat[static_cast<size_t>(r * c + j)] = xh;
      od[r * c + j] = gd[j] * xh + bd[j];
    }
  }
  round_to_storage(out.data());
  if (out.requires_grad()) {
    NodeP xn = x.node_ptr(), gn = gamma.node_ptr(), bn = beta.node_ptr();
    NodeP on = out.node_ptr();
    bool gx = x.requires_grad(), gg = gamma.requires_grad(),
         gb = beta.requires_grad();
    active_tape()->record(
        [xn, gn, bn, on, rows, c, gx, gg, gb, xhat = std::move(xhat),
         rstd = std::move(rstd)]() {
          if (on->grad.empty()) return;
          const double* go = on->grad.data();
          const double* gd = gn->data.data();
          double* gxd = gx ? xn->ensure_grad().data() : nullptr;
          double* ggd = gg ? gn->ensure_grad().data() : nullptr;
          double* gbd = gb ? bn->ensure_grad().data() : nullptr;
          for (long r = 0; r < rows; ++r) {
            const double* grow = go + r * c;
            const double* xh = xhat.data() + r * c;
            if (ggd || gbd) {
              for (long j = 0; j < c; ++j) {
                if (ggd) ggd[j] += grow[j] * xh[j];
                if (gbd) gbd[j] += grow[j];
              }
            }
            if (gxd) {
              double m1 = 0.0, m2 = 0.0;
              for (long j = 0; j < c; ++j) {
                double h = grow[j] * gd[j];
                m1 += h;
                m2 += h * xh[j];
              }
              m1 /= static_cast<double>(c);
              m2 /= static_cast<double>(c);
              double inv = rstd[static_cast<size_t>(r)];
              for (long j = 0; j < c; ++j) {
                double h = grow[j] * gd[j];
                gxd[r * c + j] += inv * (h - m1 - xh[j] * m2);
              }
            }
          }
        });
  }
  return out;
}

Tensor grid_sample(const Tensor& feat, const Tensor& pts) {
  require(feat.ndim() == 3, "grid_sample: feat must be [C,H,W]");
  require(pts.ndim() >= 1 && pts.dim(pts.ndim() - 1) == 2,
          "grid_sample: pts must end in coordinate pairs");
  long C = feat.dim(0), H = feat.dim(1), W = feat.dim(2);
  require(H >= 1 && W >= 1, "grid_sample: empty feature map");
  long P = pts.numel() / 2;
  Shape os(pts.shape().begin(), pts.shape().end() - 1);
  os.push_back(C);
  bool rg = rec1(feat) || rec1(pts);
  Tensor out = Tensor::zeros(os, active_tape() && rg);
  const double* fd = feat.data().data();
  const double* pd = pts.data().data();
  double* od = out.data().data();
  long hw = H * W;
  auto corner = [&](long c, long x, long y) -> double {
    if (x < 0 || x >= W || y < 0 || y >= H) return 0.0;
    return fd[c * hw + y * W + x];
  };
  for (long p = 0; p < P; ++p) {
    double u = pd[2 * p], v = pd[2 * p + 1];
    double fx = (u + 1.0) * 0.5 * static_cast<double>(W - 1);
    double fy = (v + 1.0) * 0.5 * static_cast<double>(H - 1);
    double flx = std::floor(fx), fly = std::floor(fy);
    long x0 = static_cast<long>(flx), y0 = static_cast<long>(fly);
    double wx = fx - flx, wy = fy - fly;
    for (long c = 0; c < C; ++c) {
      double f00 = corner(c, x0, y0), f10 = corner(c, x0 + 1, y0);
      double f01 = corner(c, x0, y0 + 1), f11 = corner(c, x0 + 1, y0 + 1);
      od[p * C + c] = (1.0 - wy) * ((1.0 - wx) * f00 + wx * f10) +
                      wy * ((1.0 - wx) * f01 + wx * f11);
    }
  }
  round_to_storage(out.data());
  if (out.requires_grad()) {
    NodeP fn = feat.node_ptr(), pn = pts.node_ptr(), on = out.node_ptr();
    bool gf = feat.requires_grad(), gp = pts.requires_grad();
    active_tape()->record([fn, pn, on, C, H, W, P, gf, gp]() {
      if (on->grad.empty()) return;
      const double* go = on->grad.data();
      const double* fd = fn->data.data();
      const double* pd = pn->data.data();
      double* gfd = gf ? fn->ensure_grad().data() : nullptr;
      double* gpd = gp ? pn->ensure_grad().data() : nullptr;
      long hw = H * W;
      auto inb = [&](long x, long y) { return x >= 0 && x < W && y >= 0 && y < H; };
      for (long p = 0; p < P; ++p) {
        double u = pd[2 * p], v = pd[2 * p + 1];
        double fx = (u + 1.0) * 0.5 * static_cast<double>(W - 1);
        double fy = (v + 1.0) * 0.5 * static_cast<double>(H - 1);
        double flx = std::floor(fx), fly = std::floor(fy);
        long x0 = static_cast<long>(flx), y0 = static_cast<long>(fly);
        double wx = fx - flx, wy = fy - fly;
        double du = 0.0, dv = 0.0;
        for (long c = 0; c < C; ++c) {
          double g = go[p * C + c];
          if (g == 0.0) continue;
          double f00 = inb(x0, y0) ? fd[c * hw + y0 * W + x0] : 0.0;
          double f10 = inb(x0 + 1, y0) ? fd[c * hw + y0 * W + x0 + 1] : 0.0;
          double f01 = inb(x0, y0 + 1) ? fd[c * hw + (y0 + 1) * W + x0] : 0.0;
          double f11 =
              inb(x0 + 1, y0 + 1) ? fd[c * hw + (y0 + 1) * W + x0 + 1] : 0.0;
          if (gfd) {
            if (inb(x0, y0))
              gfd[c * hw + y0 * W + x0] += g * (1.0 - wy) * (1.0 - wx);
            if (inb(x0 + 1, y0))
              gfd[c * hw + y0 * W + x0 + 1] += g * (1.0 - wy) * wx;
            if (inb(x0, y0 + 1))
              gfd[c * hw + (y0 + 1) * W + x0] += g * wy * (1.0 - wx);
            if (inb(x0 + 1, y0 + 1))
              gfd[c * hw + (y0 + 1) * W + x0 + 1] += g * wy * wx;
          }
          if (gpd) {
            du += g * ((1.0 - wy) * (f10 - f00) + wy * (f11 - f01));
            dv += g * ((1.0 - wx) * (f01 - f00) + wx * (f11 - f10));
          }
        }
        if (gpd) {
          gpd[2 * p] += du * 0.5 * static_cast<double>(W - 1);
          gpd[2 * p + 1] += dv * 0.5 * static_cast<double>(H - 1);
        }
      }
    });
  }
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, long stride,
              long pad) {
  require(x.ndim() == 3, "conv2d: x must be [Cin,H,W]");
  require(w.ndim() == 4, "conv2d: w must be [Cout,Cin,kh,kw]");
  long cin = x.dim(0), H = x.dim(1), W = x.dim(2);
  require(w.dim(1) == cin, "conv2d: channel mismatch");
  long cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  require(stride >= 1 && pad >= 0, "conv2d: bad stride/pad");
  long Ho = (H + 2 * pad - kh) / stride + 1;
  long Wo = (W + 2 * pad - kw) / stride + 1;
  require(Ho >= 1 && Wo >= 1, "conv2d: kernel larger than padded input");
  bool with_b = b.defined();
  if (with_b) require(b.numel() == cout, "conv2d: bias size mismatch");
  bool rg = rec1(x) || rec1(w) || (with_b && rec1(b));
  Tensor out = Tensor::zeros({cout, Ho, Wo}, active_tape() && rg);
  const double* xd = x.data().data();
  const double* wd = w.data().data();
  double* od = out.data().data();
  for (long co = 0; co < cout; ++co) {
    double bias = with_b ? b.data()[static_cast<size_t>(co)] : 0.0;
    for (long oy = 0; oy < Ho; ++oy)
      for (long ox = 0; ox < Wo; ++ox) {
        double acc = bias;
        for (long ci = 0; ci < cin; ++ci)
          for (long ky = 0; ky < kh; ++ky) {
            long iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= H) continue;
            const double* xrow = xd + (ci * H + iy) * W;
            const double* wrow = wd + ((co * cin + ci) * kh + ky) * kw;
            for (long kx = 0; kx < kw; ++kx) {
              long ix = ox * stride - pad + kx;
              if (ix < 0 || ix >= W) continue;
              acc += xrow[ix] * wrow[kx];
            }
          }
        od[(co * Ho + oy) * Wo + ox] = acc;
      }
  }
  round_to_storage(out.data());
  if (out.requires_grad()) {
    NodeP xn = x.node_ptr(), wn = w.node_ptr(), on = out.node_ptr();
    NodeP bn = with_b ? b.node_ptr() : nullptr;
    bool gx = x.requires_grad(), gw = w.requires_grad();
    bool gb = with_b && b.requires_grad();
    active_tape()->record([xn, wn, bn, on, cin, cout, H, W, Ho, Wo, kh, kw,
                           stride, pad, gx, gw, gb]() {
      if (on->grad.empty()) return;
      const double* go = on->grad.data();
      const double* xd = xn->data.data();
      const double* wd = wn->data.data();
      double* gxd = gx ? xn->ensure_grad().data() : nullptr;
      double* gwd = gw ? wn->ensure_grad().data() : nullptr;
      double* gbd = gb ? bn->ensure_grad().data() : nullptr;
      for (long co = 0; co < cout; ++co)
        for (long oy = 0; oy < Ho; ++oy)
          for (long ox = 0; ox < Wo; ++ox) {
            double g = go[(co * Ho + oy) * Wo + ox];
            if (g == 0.0) continue;
            if (gbd) gbd[co] += g;
            for (long ci = 0; ci < cin; ++ci)
              for (long ky = 0; ky < kh; ++ky) {
                long iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= H) continue;
                for (long kx = 0; kx < kw; ++kx) {
                  long ix = ox * stride - pad + kx;
                  if (ix < 0 || ix >= W) continue;
                  long xo = (ci * H + iy) * W + ix;
                  long wo = ((co * cin + ci) * kh + ky) * kw + kx;
                  if (gxd) gxd[xo] += g * wd[wo];
                  if (gwd) gwd[wo] += g * xd[xo];
                }
              }
          }
    });
  }
  return out;
}

Tensor upsample_nearest(const Tensor& x, long Ht, long Wt) {
  require(x.ndim() == 3, "upsample_nearest: x must be [C,H,W]");
  long C = x.dim(0), H = x.dim(1), W = x.dim(2);
  require(Ht >= 1 && Wt >= 1, "upsample_nearest: bad target size");
  Tensor out = Tensor::zeros({C, Ht, Wt}, rec1(x));
  const double* xd = x.data().data();
  double* od = out.data().data();
  for (long c = 0; c < C; ++c)
    for (long y = 0; y < Ht; ++y) {
      long sy = y * H / Ht;
      for (long xw = 0; xw < Wt; ++xw) {
        long sx = xw * W / Wt;
        od[(c * Ht + y) * Wt + xw] = xd[(c * H + sy) * W + sx];
      }
    }
  if (out.requires_grad()) {
    NodeP xn = x.node_ptr(), on = out.node_ptr();
    active_tape()->record([xn, on, C, H, W, Ht, Wt]() {
      if (on->grad.empty()) return;
      const auto& go = on->grad;
      auto& ga = xn->ensure_grad();
      for (long c = 0; c < C; ++c)
        for (long y = 0; y < Ht; ++y) {
          long sy = y * H / Ht;
          for (long xw = 0; xw < Wt; ++xw) {
            long sx = xw * W / Wt;
            ga[static_cast<size_t>((c * H + sy) * W + sx)] +=
                go[static_cast<size_t>((c * Ht + y) * Wt + xw)];
          }
        }
    });
  }
  return out;
}

Tensor quat_normalize(const Tensor& q) {
  require(q.ndim() >= 1 && q.dim(q.ndim() - 1) == 4,
          "quat_normalize: trailing axis must be 4");
  long rows = q.numel() / 4;
  Tensor out = Tensor::zeros(q.shape(), rec1(q));
  const double* qd = q.data().data();
  double* od = out.data().data();
  for (long r = 0; r < rows; ++r) {
    const double* a = qd + 4 * r;
    double n = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2] + a[3] * a[3]);
    if (n < 1e-8) {
      od[4 * r] = 1.0;
      od[4 * r + 1] = od[4 * r + 2] = od[4 * r + 3] = 0.0;
    } else {
      for (int k = 0; k < 4; ++k) od[4 * r + k] = a[k] / n;
    }
  }
  round_to_storage(out.data());
  if (out.requires_grad()) {
    NodeP qn = q.node_ptr(), on = out.node_ptr();
    active_tape()->record([qn, on, rows]() {
      if (on->grad.empty()) return;
      const double* go = on->grad.data();
      const double* qd = qn->data.data();
      const double* od = on->data.data();
      double* gq = qn->ensure_grad().data();
      for (long r = 0; r < rows; ++r) {
        const double* a = qd + 4 * r;
        double n =
            std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2] + a[3] * a[3]);
        if (n < 1e-8) continue;  // degenerate rows are pinned to identity
        const double* y = od + 4 * r;
        const double* g = go + 4 * r;
        double dot = g[0] * y[0] + g[1] * y[1] + g[2] * y[2] + g[3] * y[3];
        for (int k = 0; k < 4; ++k) gq[4 * r + k] += (g[k] - dot * y[k]) / n;
      }
    });
  }
  return out;
}

namespace {
// out = Q(a) b with rows ordered (w,x,y,z); also out = R(b) a.
void hamilton_matrices(const double* a, const double* b, double Q[16],
                       double R[16]) {
  double w = a[0], x = a[1], y = a[2], z = a[3];
  double Qm[16] = {w, -x, -y, -z, x, w, -z, y, y, z, w, -x, z, -y, x, w};
  std::memcpy(Q, Qm, sizeof(Qm));
  double w2 = b[0], x2 = b[1], y2 = b[2], z2 = b[3];
  double Rm[16] = {w2, -x2, -y2, -z2, x2, w2,  z2, -y2,
                   y2, -z2, w2,  x2,  z2, y2, -x2, w2};
  std::memcpy(R, Rm, sizeof(Rm));
}
}  // namespace

Tensor quat_multiply(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape() && a.ndim() >= 1 &&
              a.dim(a.ndim() - 1) == 4,
          "quat_multiply: shapes must match with trailing axis 4");
  long rows = a.numel() / 4;
  Tensor out = Tensor::zeros(a.shape(), rec2(a, b));
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  double* od = out.data().data();
  for (long r = 0; r < rows; ++r) {
    double Q[16], R[16];
    hamilton_matrices(ad + 4 * r, bd + 4 * r, Q, R);
    for (int i = 0; i < 4; ++i) {
      double acc = 0.0;
      for (int j = 0; j < 4; ++j) acc += Q[i * 4 + j] * bd[4 * r + j];
      od[4 * r + i] = acc;
    }
  }
  round_to_storage(out.data());
  if (out.requires_grad()) {
    NodeP an = a.node_ptr(), bn = b.node_ptr(), on = out.node_ptr();
    bool ga = a.requires_grad(), gb = b.requires_grad();
    active_tape()->record([an, bn, on, rows, ga, gb]() {
      if (on->grad.empty()) return;
      const double* go = on->grad.data();
      const double* ad = an->data.data();
      const double* bd = bn->data.data();
      double* gad = ga ? an->ensure_grad().data() : nullptr;
      double* gbd = gb ? bn->ensure_grad().data() : nullptr;
      for (long r = 0; r < rows; ++r) {
        double Q[16], R[16];
        hamilton_matrices(ad + 4 * r, bd + 4 * r, Q, R);
        const double* g = go + 4 * r;
        for (int j = 0; j < 4; ++j) {
          double accA = 0.0, accB = 0.0;
          for (int i = 0; i < 4; ++i) {
            accA += R[i * 4 + j] * g[i];
            accB += Q[i * 4 + j] * g[i];
          }
          if (gad) gad[4 * r + j] += accA;
          if (gbd) gbd[4 * r + j] += accB;
        }
      }
    });
  }
  return out;
}

}  // namespace ops
}  // namespace unigs
