// Copyright 2026 The rstca Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "rstca/tensor.hpp"

namespace rstca {

enum class ElementwiseOp { kAdd, kSub, kMul, kSigmoid, kGelu, kRelu, kScale };

/// Binary ops broadcast numpy-style (right-aligned, singleton dims expand).
/// Unary ops ignore `b`; kScale multiplies by `alpha`.
Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor* b = nullptr,
                   float alpha = 1.0f);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor sigmoid(const Tensor& x);
/// Exact form x * Phi(x) with the Gaussian CDF via erf.
Tensor gelu(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor scale(const Tensor& x, float alpha);

/// Broadcast shape of two operands, or ShapeError naming both shapes.
Shape broadcast_shapes(const Shape& a, const Shape& b);

/// a[..., m, k] x b[..., k, n]; batch dimensions broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);

/// x[..., in] * w[in, out] + bias[out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor* bias = nullptr);

enum class Padding { kSame, kValid };

/// Cross-correlation of x[B,Cin,H,W] with w[Cout,Cin,kh,kw]; same padding
/// pads with zeros and needs odd kernels.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias = nullptr,
              Padding padding = Padding::kSame);

/// Normalizes over the last dimension, then applies gamma/beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps = 1e-5f);

Tensor softmax_lastdim(const Tensor& x);

/// [B,C,H,W] -> [B,C,1,1] spatial mean.
Tensor global_avg_pool(const Tensor& x);

/// Mean over one dimension, kept as size 1.
Tensor mean_dim(const Tensor& x, std::int64_t dim);

/// [B,C,H,W] -> [B,C*r*r,H/r,W/r]; channel c*r*r + i*r + j holds x[c, y*r+i, x*r+j].
Tensor pixel_unshuffle(const Tensor& x, std::int64_t r);
/// Exact inverse of pixel_unshuffle.
Tensor pixel_shuffle(const Tensor& x, std::int64_t r);

Tensor reshape(const Tensor& x, Shape shape);
/// Output dimension i is input dimension perm[i].
Tensor permute(const Tensor& x, const std::vector<std::int64_t>& perm);

using IndexMap = std::shared_ptr<const std::vector<std::int64_t>>;

/// out.flat[i] = x.flat[index[i]]. Backward scatter-adds, so repeated indices
/// are allowed (used for relative-position bias lookup).
Tensor gather(const Tensor& x, IndexMap index, Shape out_shape);

/// Reflect-pads [B,C,H,W] on the bottom and right. Pads wider than the image
/// mirror periodically.
Tensor reflect_pad_br(const Tensor& x, std::int64_t pad_h, std::int64_t pad_w);
/// Keeps the top-left [h, w] window of [B,C,H,W].
Tensor crop_tl(const Tensor& x, std::int64_t h, std::int64_t w);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Index of `i` in [0, n) after mirror reflection without edge repeat.
std::int64_t reflect_index(std::int64_t i, std::int64_t n);

}  // namespace rstca
