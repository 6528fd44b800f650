#pragma once

#include "fancgan/autograd.hpp"

// Differentiable primitives. Image tensors are NCHW, feature rows are (N, F).
namespace fancgan::ops {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

// Reductions to shape {1}.
Var sum(const Var& a);
Var mean(const Var& a);

// Zero padding; `bias` may be undefined.
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
int conv_output_size(int in, int kernel, int stride, int pad);

// x (N, In), weight (Out, In), bias (Out) or undefined.
Var linear(const Var& x, const Var& weight, const Var& bias);

Var leaky_relu(const Var& x, double slope);
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var tanh(const Var& x);
// elu(x) + 1: strictly positive kernel feature map.
Var elu_plus_one(const Var& x);

// Per-sample, per-channel standardization over the spatial extent.
Var instance_norm(const Var& x, double eps);
// x * gamma[n, c] + beta[n, c]; gamma and beta are (N, C).
Var channel_affine(const Var& x, const Var& gamma, const Var& beta);
// x + scales[c] * noise[n, 0, h, w]; noise is (N, 1, H, W) and not trained.
Var add_channel_noise(const Var& x, const Var& scales, const Tensor& noise);
// x[n, c, h, w] * a[n, 0, h, w].
Var spatial_gate(const Var& x, const Var& a);

Var upsample_nearest2x(const Var& x);
Var maxpool2x2(const Var& x);
Var avgpool2x2(const Var& x);
Var global_avg_pool(const Var& x);  // (N, C)

Var concat_channels(const Var& a, const Var& b);
Var repeat_channels(const Var& x, int times);
Var slice_cols(const Var& x, int start, int len);

// Kernelized attention with non-negative feature maps q, k (N, D, H, W) and
// values v (N, C, H, W): out[:, p] = sum_j v_j (k_j . q_p) / sum_j (k_j . q_p).
// Cost is linear in the pixel count.
Var linear_attention(const Var& q, const Var& k, const Var& v, double eps = 1e-6);

}  // namespace fancgan::ops
