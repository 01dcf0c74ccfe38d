#pragma once

#include <array>

#include "ctlab/tensor.hpp"

namespace ctlab {

// Differentiable network operations. Every tensor is rank-5 (N, C, D, H, W);
// 2D networks run through the same kernels with D == 1 and depth-1 kernels,
// which keeps the parameter shapes and arithmetic of the 2D baseline exact.

// Cross-correlation with zero padding (k-1)/2 per axis (odd kernels only),
// stride 1: spatial shape is preserved. w is (OC, IC, KD, KH, KW), b is (OC).
Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b);

// Train mode normalizes by batch statistics per channel (over N and spatial
// dims, biased variance) and updates running stats in place with `momentum`
// (running variance stores the unbiased estimate, matching the convention of
// mainstream frameworks). Eval mode uses the running stats. Only gamma and
// beta are learnable.
// Running-stat handles are taken by value (handles alias shared storage) and
// mutated in place during train mode; they never join the gradient graph.
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 Tensor running_mean, Tensor running_var, bool train,
                 double momentum = 0.1, double eps = 1e-5);

// x if x >= 0 else slope * x. Backward uses slope at exactly 0.
Tensor leaky_relu(const Tensor& x, double slope = 0.01);

// Per-window maximum, stride == kernel. Gradient routes to the argmax,
// first index in (z, y, x) scan order on ties.
Tensor maxpool(const Tensor& x, std::array<int, 3> kernel);

// Integer-factor linear upsampling with half-pixel centers:
// src = (i_out + 0.5) / scale - 0.5, clamped to the borders. Backward is the
// exact transpose of the interpolation weights.
Tensor upsample_linear(const Tensor& x, std::array<int, 3> scale);

Tensor concat_channels(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);

// Mean absolute difference over all elements; the subgradient at equal
// entries is 0.
Tensor l1_loss(const Tensor& pred, const Tensor& target);

Tensor sum(const Tensor& x);

}  // namespace ctlab
