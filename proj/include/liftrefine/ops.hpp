// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "liftrefine/tensor.hpp"

#include <cstdint>
#include <vector>

namespace liftrefine {

// Every op below records itself on the current tape when an input requires
// grad. Binary elementwise ops broadcast the shorter operand over leading
// dimensions only: its shape must equal a suffix of the other operand's shape.

// --- elementwise -----------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// Throws ValueError when `b` contains an exact zero.
Tensor div(const Tensor& a, const Tensor& b);
/// scale * x + shift.
Tensor affine(const Tensor& x, double scale, double shift);

Tensor neg(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor exp(const Tensor& x);
/// Throws ValueError on non-positive input.
Tensor log(const Tensor& x);
Tensor sin(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor square(const Tensor& x);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& x);
Tensor operator+(const Tensor& x, double s);
Tensor operator+(double s, const Tensor& x);
Tensor operator-(const Tensor& x, double s);
Tensor operator-(double s, const Tensor& x);
Tensor operator*(const Tensor& x, double s);
Tensor operator*(double s, const Tensor& x);

// --- reductions ------------------------------------------------------------
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum(const Tensor& x, std::int64_t axis);
Tensor mean(const Tensor& x, std::int64_t axis);
/// Softmax over the last axis.
Tensor softmax(const Tensor& x);

// --- shape -----------------------------------------------------------------
/// One entry may be -1 and is inferred.
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::int64_t>& axes);
/// Swaps the last two axes.
Tensor transpose(const Tensor& x);
Tensor concat(const std::vector<Tensor>& parts, std::int64_t axis);
/// Half-open range [begin, end) along `axis`.
Tensor slice(const Tensor& x, std::int64_t axis, std::int64_t begin, std::int64_t end);

// --- linear algebra --------------------------------------------------------
/// [M,K]x[K,N], [B,M,K]x[B,K,N], or [B,M,K]x[K,N].
Tensor matmul(const Tensor& a, const Tensor& b);

// --- spatial ---------------------------------------------------------------
/// Stride-1 convolution with zero padding k/2. x: [Cin,H,W] or [B,Cin,H,W];
/// weight: [Cout,Cin,k,k] with odd k; bias: [Cout] or undefined.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias);
/// Nearest-neighbour x2 upsampling of the last two axes.
Tensor upsample_nearest2x(const Tensor& x);
/// 2x2 average pooling of the last two axes (both must be even).
Tensor avg_pool2x(const Tensor& x);
/// Normalises each of `groups` channel groups to zero mean and unit variance
/// over (channels in group, H, W), per batch item. No learned affine.
Tensor group_norm(const Tensor& x, std::int64_t groups, double eps = 1e-5);
/// Keys bicubic (a = -0.5) upsampling of the last two axes by an integer
/// factor, half-pixel centres, clamped borders.
Tensor bicubic_upsample(const Tensor& x, std::int64_t factor);
/// Samples image [C,H,W] at N continuous (col,row) index coordinates given as
/// [N,2]; taps outside the grid read as zero. Returns [N,C]. Differentiable
/// with respect to both the image and the coordinates.
Tensor bilinear_sample_2d(const Tensor& image, const Tensor& coords);
/// Samples volume [C,D,H,W] at N (x=w, y=h, z=d) index coordinates [N,3];
/// taps outside the grid read as zero. Returns [N,C].
Tensor trilinear_sample_3d(const Tensor& volume, const Tensor& coords);

// --- attention -------------------------------------------------------------
struct AttentionOptions {
    /// Sum key contributions in value-sorted order so the result is bitwise
    /// invariant to permutations of the key set. Intended for small key sets.
    bool order_invariant = false;
};

/// softmax(Q K^T / sqrt(d)) V as one primitive.
/// q: [N,d] or [B,N,d] (2-D q is shared across the batch); k: [B,M,d] or [M,d];
/// v: [B,M,dv] or [M,dv]; mask (optional): [B,M] or [M] with 1 = keep, 0 = drop.
/// Rows whose keys are all masked produce zeros.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& mask = Tensor(),
                 AttentionOptions options = {});

// --- helpers built from the primitives above -------------------------------
/// Broadcasts a per-channel vector [C] to [C,H,W].
Tensor expand_channels(const Tensor& v, std::int64_t height, std::int64_t width);
/// Applies x * (1 + scale) + shift with per-channel [C] scale/shift to x: [C,H,W].
Tensor channel_modulate(const Tensor& x, const Tensor& scale, const Tensor& shift);

} // namespace liftrefine
