#pragma once

#include <vector>

#include "unigs/tensor.hpp"

namespace unigs {
namespace ops {

// Elementwise with NumPy-style broadcasting. Gradients of a broadcast
// operand are sum-reduced over the broadcast dimensions.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);

Tensor neg(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
// Subgradient 0 outside [lo,hi].
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor reshape(const Tensor& a, Shape shape);
Tensor slice(const Tensor& a, long axis, long start, long len);
Tensor select(const Tensor& a, long axis, long index);  // drops the axis
Tensor concat(const std::vector<Tensor>& parts, long axis);
// rows along axis 0; duplicate indices accumulate in the backward scatter
Tensor gather_rows(const Tensor& a, const std::vector<long>& indices);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_axis(const Tensor& a, long axis, bool keepdim = false);

Tensor transpose2(const Tensor& a);  // [M,N] -> [N,M]

// Sums over the leading axis with the addends sorted first, so the result
// is bit-identical under any permutation of the slices.
Tensor sum_ordered_axis0(const Tensor& a);

// x: [..., Cin], W: [Cin, Cout], b: [Cout] or undefined for bias-free.
Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b);     // [M,K]x[K,N]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [M,K]x[N,K]^T

// Max-subtracted, normalizes along `axis`.
Tensor softmax(const Tensor& a, long axis);

// Normalizes the trailing axis; gamma/beta have shape [C].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

// feat: [C,H,W], pts: [...,2] in [-1,1] with (-1,-1) at pixel (0,0) and
// (1,1) at pixel (W-1,H-1). Bilinear, zero padding outside, differentiable
// in both arguments. Returns [...,C].
Tensor grid_sample(const Tensor& feat, const Tensor& pts);

// x: [Cin,H,W], w: [Cout,Cin,kh,kw], b: [Cout] or undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, long stride,
              long pad);

// Nearest neighbour, source index floor(i*H/Ht).
Tensor upsample_nearest(const Tensor& x, long Ht, long Wt);

// Rows of shape [N,4], (w,x,y,z). Norms below 1e-8 map to identity with
// zero gradient.
Tensor quat_normalize(const Tensor& q);
Tensor quat_multiply(const Tensor& a, const Tensor& b);

}  // namespace ops
}  // namespace unigs
