#pragma once

#include "graphdepth/tensor.hpp"

namespace graphdepth {

// Differentiable primitives. Each records itself on the tape; untracked
// inputs act as constants. No implicit broadcasting except scalar*tensor.

Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int64_t stride, int64_t padding);

Tensor relu(Tape& tape, const Tensor& x);
Tensor sigmoid(Tape& tape, const Tensor& x);
Tensor softplus(Tape& tape, const Tensor& x);
Tensor exp(Tape& tape, const Tensor& x);
Tensor neg(Tape& tape, const Tensor& x);
Tensor abs(Tape& tape, const Tensor& x);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& x, double c);
// Gradient flows only strictly inside (lo, hi).
Tensor clamp(Tape& tape, const Tensor& x, double lo, double hi);

// BxCxHxW -> BxCx1x1
Tensor global_avg_pool(Tape& tape, const Tensor& x);
// BxCxHxW -> BxCx2Hx2W, half-pixel-center sampling (align-corners disabled).
Tensor upsample2x_bilinear(Tape& tape, const Tensor& x);

Tensor reshape(Tape& tape, const Tensor& x, Shape shape);
Tensor concat_channels(Tape& tape, const Tensor& a, const Tensor& b);
Tensor slice_channels(Tape& tape, const Tensor& x, int64_t c0, int64_t c1);
// Column-wise concat of NxCa and NxCb matrices.
Tensor concat_cols(Tape& tape, const Tensor& a, const Tensor& b);
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
// y[n,o] = bias[o] + sum_k x[n,k] * w[o,k]
Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias);
Tensor sum_over(Tape& tape, const Tensor& x);
Tensor mean_over(Tape& tape, const Tensor& x);

// x BxCxHxW scaled per channel by gate (BxC or BxCx1x1).
Tensor mul_channels(Tape& tape, const Tensor& x, const Tensor& gate);

// BxCxHxW <-> (B*H*W)xC with node order b*H*W + r*W + c.
Tensor nchw_to_nodes(Tape& tape, const Tensor& x);
Tensor nodes_to_nchw(Tape& tape, const Tensor& x, int64_t B, int64_t C, int64_t H, int64_t W);

}  // namespace graphdepth
