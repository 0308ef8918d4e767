#include "unigs/gradcheck.hpp"

#include <cmath>
#include <sstream>

namespace unigs {

GradCheckReport grad_check(
    const std::function<Tensor(const std::vector<Tensor>&)>& f,
    const std::vector<Tensor>& inputs, const GradCheckOpts& opts) {
  GradCheckReport rep;
  std::vector<Tensor> in = inputs;
  for (Tensor& t : in) t.set_requires_grad(true);

  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    for (Tensor& t : in) t.zero_grad();
    Tensor loss = f(in);
    require(loss.numel() == 1, "grad_check: f must return a scalar");
    tape.backward(loss);
    for (Tensor& t : in) analytic.push_back(t.grad());
  }

  NoGradScope no_grad;
  for (size_t ii = 0; ii < in.size(); ++ii) {
    Tensor& t = in[ii];
    long n = t.numel();
    std::vector<long> picks;
    if (opts.max_entries >= 0 && n > opts.max_entries) {
      for (long k = 0; k < opts.max_entries; ++k)
        picks.push_back(k * n / opts.max_entries);
    } else {
      for (long j = 0; j < n; ++j) picks.push_back(j);
    }
    for (long j : picks) {
      auto u = static_cast<size_t>(j);
      double saved = t.data()[u];
      t.data()[u] = saved + opts.h;
      double lp = f(in).item();
      t.data()[u] = saved - opts.h;
      double lm = f(in).item();
      t.data()[u] = saved;
      double fd = (lp - lm) / (2.0 * opts.h);
      double an = analytic[ii][u];
      double denom =
          std::max(std::max(std::fabs(an), std::fabs(fd)), opts.denom_floor);
      double rel = std::fabs(an - fd) / denom;
      ++rep.checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        std::ostringstream os;
        os << "input " << ii << " entry " << j << ": analytic=" << an
           << " fd=" << fd << " rel=" << rel;
        rep.worst = os.str();
      }
      if (rel > opts.tol) {
        ++rep.failed;
        rep.pass = false;
      }
    }
  }
  return rep;
}

}  // namespace unigs
