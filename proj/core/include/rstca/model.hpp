// Copyright 2026 The rstca Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "rstca/swin.hpp"
#include "rstca/tensor.hpp"

namespace rstca {

/// How channel attention is placed inside an RSTCAB.
enum class CaMode {
  kNone,     // plain residual Swin block
  kSingle,   // one gate: stats from the block input, applied to the last STL output
  kPerPair,  // one gate per STL pair, all sharing one parameter set
  kPerLayer  // one gate after every STL, stats from that STL's input
};

std::string_view to_string(CaMode mode);
CaMode parse_ca_mode(std::string_view text);

struct ModelConfig {
  std::int64_t channels = 72;    // C
  std::int64_t blocks = 2;       // K, RSTCAB count
  std::int64_t heads = 6;
  std::int64_t stls = 6;         // N, Swin layers per RSTCAB
  std::int64_t window = 8;       // M
  CaMode ca_mode = CaMode::kPerPair;
  bool short_skip = false;       // residual around every STL pair
  std::int64_t conv_in_block = 1;  // 0, 1 or 2 trailing 3x3 convs per RSTCAB
  std::int64_t conv_in_dfe = 1;    // 1 or 2 3x3 convs closing the deep module
  std::int64_t reduction = 16;     // CA squeeze ratio r
  std::int64_t unshuffle = 2;      // mosaic packing factor
  std::int64_t mlp_ratio = 4;

  /// Throws std::invalid_argument describing the first invalid field.
  void validate() const;
  /// Hidden width of the channel-attention squeeze, floor(C / r).
  std::int64_t ca_hidden() const;

  static ModelConfig variant_b();
  static ModelConfig variant_s();
  static ModelConfig variant_l();
  /// Desk-scale preset for tests: C=16, K=1, N=2, heads=2, M=4.
  static ModelConfig tiny();
  /// "B", "S", "L" or "tiny".
  static ModelConfig preset(std::string_view name);

  bool operator==(const ModelConfig&) const = default;
};

/// Squeeze-and-excitation gate: sigmoid(W_up relu(W_down gap(x) + b) + b).
struct ChannelAttention {
  Tensor down_w, down_b;  // [C, C/r], [C/r]
  Tensor up_w, up_b;      // [C/r, C], [C]

  static ChannelAttention create(std::int64_t channels, std::int64_t hidden,
                                 std::mt19937_64& rng);
  /// Per-channel scales in (0,1) from pooled statistics [B, C] -> [B, C].
  Tensor scales(const Tensor& pooled) const;
  std::vector<std::pair<std::string, Tensor>> parameters() const;
};

/// target * gate(gap(stats)), both [B,C,H,W].
Tensor channel_attention_apply(const ChannelAttention& ca, const Tensor& stats,
                               const Tensor& target);
/// Token-layout variant for [B, L, C] features; pooling is over L.
Tensor channel_attention_apply_tokens(const ChannelAttention& ca, const Tensor& stats,
                                      const Tensor& target);

struct Conv3x3 {
  Tensor w, b;  // [Cout, Cin, 3, 3], [Cout]
  static Conv3x3 create(std::int64_t cin, std::int64_t cout, std::mt19937_64& rng,
                        std::int64_t kernel = 3);
  Tensor operator()(const Tensor& x) const;
};

struct RstcabParams {
  std::vector<StlParams> stls;
  std::optional<ChannelAttention> ca;  // absent when ca_mode == kNone
  std::vector<Conv3x3> convs;          // conv_in_block entries
  CaMode ca_mode = CaMode::kPerPair;
  bool short_skip = false;

  std::vector<std::pair<std::string, Tensor>> parameters() const;
};

/// Residual Swin transformer channel-attention block on tokens [B, H*W, C].
Tensor rstcab_forward(const RstcabParams& p, const Tensor& x, const WindowSpec& spec,
                      std::int64_t h, std::int64_t w);

class RstcaNet {
 public:
  /// Deterministic construction from `seed`.
  static RstcaNet build(const ModelConfig& cfg, std::uint64_t seed = 0);

  const ModelConfig& config() const { return cfg_; }
  WindowSpec window_spec() const { return WindowSpec::with_window(cfg_.window); }

  /// mosaic [B,1,H,W] -> tokens [B, (H/2)(W/2), C].
  Tensor shallow_extract(const Tensor& mosaic) const;
  /// tokens [B, h*w, C] -> deep features [B, C, h, w] (padding handled inside).
  Tensor deep_extract(const Tensor& tokens, std::int64_t h, std::int64_t w) const;
  /// features [B, C, h, w] -> RGB [B, 3, 2h, 2w].
  Tensor reconstruct(const Tensor& features) const;
  /// mosaic [B,1,H,W] -> RGB [B,3,H,W], H and W even. Not clamped.
  Tensor forward(const Tensor& mosaic) const;
  /// forward() without a tape, clamped to [0,1]; pads odd sizes by reflection.
  Tensor infer(const Tensor& mosaic) const;

  /// Named learnable tensors in a stable order (checkpoint manifest order).
  std::vector<std::pair<std::string, Tensor>> parameters() const;
  /// Learnable float count.
  std::int64_t param_count() const;
  /// Bytes of a full state dictionary at a given training patch size: float32
  /// parameters plus the non-learnable per-layer buffers (int64 relative
  /// position index for every STL and the float32 shifted-window mask of every
  /// shifted STL at the patch's feature resolution).
  std::int64_t state_dict_bytes(std::int64_t patch = 64) const;

  /// Deep-module parameters (everything between shallow and reconstruction).
  std::vector<std::pair<std::string, Tensor>> deep_parameters() const;
  const std::vector<RstcabParams>& blocks() const { return blocks_; }

 private:
  ModelConfig cfg_;
  Tensor embed_w_, embed_b_;  // [u^2, C], [C]
  std::vector<RstcabParams> blocks_;
  std::vector<Conv3x3> dfe_convs_;
  Conv3x3 up_;                // C -> 3 u^2
  Conv3x3 recon1_, recon2_;   // 3 -> 3 -> 3
};

/// Total learnable floats of `net`.
inline std::int64_t param_count(const RstcaNet& net) { return net.param_count(); }
inline RstcaNet build_variant(const ModelConfig& cfg, std::uint64_t seed = 0) {
  return RstcaNet::build(cfg, seed);
}

/// Size of a single shared CA parameter set: 2*C*(C/r) + C + C/r.
std::int64_t channel_attention_param_count(const ModelConfig& cfg);

}  // namespace rstca
