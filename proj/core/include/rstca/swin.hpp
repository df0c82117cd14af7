// Copyright 2026 The rstca Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rstca/ops.hpp"
#include "rstca/tensor.hpp"

namespace rstca {

/// Mask value for token pairs that must not attend to each other.
inline constexpr float kMaskValue = -1e9f;

struct WindowSpec {
  std::int64_t window = 8;  // tokens per window side
  std::int64_t shift = 4;   // roll applied on odd layers, 0 or window/2

  static WindowSpec with_window(std::int64_t m) { return {m, m / 2}; }
  void validate() const;
};

/// Learned per-head bias indexed by the offset between two tokens of a window.
struct RelativePositionBias {
  std::int64_t window = 0;
  Tensor table;   // [(2M-1)^2, heads]
  IndexMap index; // M^2 * M^2 entries, row-major over (query, key)

  static RelativePositionBias create(std::int64_t window, std::int64_t heads);
  /// [heads, M^2, M^2] bias gathered from the table.
  Tensor lookup() const;
};

/// [(M^2)*(M^2)] table bins, (dy + M - 1) * (2M - 1) + (dx + M - 1).
std::vector<std::int64_t> relative_position_index(std::int64_t window);

/// Parameters of one Swin transformer layer: pre-norm window attention and MLP.
struct StlParams {
  std::int64_t channels = 0;
  std::int64_t heads = 0;
  Tensor norm1_gamma, norm1_beta;
  Tensor qkv_w, qkv_b;    // [C, 3C], [3C]
  Tensor proj_w, proj_b;  // [C, C], [C]
  Tensor norm2_gamma, norm2_beta;
  Tensor fc1_w, fc1_b;    // [C, rC], [rC]
  Tensor fc2_w, fc2_b;    // [rC, C], [C]
  RelativePositionBias bias;

  /// Truncated-normal(0.02) weights, zero biases, unit LayerNorm gain.
  static StlParams create(std::int64_t channels, std::int64_t heads, std::int64_t window,
                          std::int64_t mlp_ratio, std::mt19937_64& rng);

  /// Named learnable tensors, in a stable order.
  std::vector<std::pair<std::string, Tensor>> parameters() const;
};

/// [B,H,W,C] -> [B*(H/M)*(W/M), M*M, C], windows in raster order per image.
Tensor window_partition(const Tensor& x, std::int64_t window);
/// Inverse of window_partition.
Tensor window_reverse(const Tensor& windows, std::int64_t window, std::int64_t h, std::int64_t w);

/// Toroidal roll of [B,H,W,C] by (-s, -s): out[y][x] = in[(y+s) mod H][(x+s) mod W].
Tensor cyclic_shift(const Tensor& x, std::int64_t shift);

/// Shift actually applied for a feature map of h x w; zero when the map is a
/// single window along either side.
std::int64_t effective_shift(std::int64_t h, std::int64_t w, std::int64_t window,
                             std::int64_t shift);

/// [numWindows, M^2, M^2] additive mask: 0 when two tokens of a shifted window
/// come from the same pre-shift region, kMaskValue otherwise.
Tensor attention_mask(std::int64_t h, std::int64_t w, std::int64_t window, std::int64_t shift);

/// Multi-head self-attention within each window of `windows` [nW*B, M^2, C].
/// `mask` is [nW, M^2, M^2] or undefined.
Tensor window_msa(const Tensor& windows, const StlParams& p, const Tensor& mask);

/// One Swin layer on tokens [B, H*W, C]. Even layers use no shift, odd layers
/// roll by spec.shift.
Tensor stl_forward(const Tensor& x, const StlParams& p, const WindowSpec& spec,
                   std::int64_t layer_index, std::int64_t h, std::int64_t w);

}  // namespace rstca
