// Copyright 2026 The rstca Authors
// SPDX-License-Identifier: Apache-2.0

#include "rstca/model.hpp"

#include <algorithm>
#include <stdexcept>

#include "init.hpp"

namespace rstca {

std::string_view to_string(CaMode mode) {
  switch (mode) {
    case CaMode::kNone:
      return "none";
    case CaMode::kSingle:
      return "single";
    case CaMode::kPerPair:
      return "perPair";
    case CaMode::kPerLayer:
      return "perLayer";
  }
  return "?";
}

CaMode parse_ca_mode(std::string_view text) {
  if (text == "none") return CaMode::kNone;
  if (text == "single") return CaMode::kSingle;
  if (text == "perPair") return CaMode::kPerPair;
  if (text == "perLayer") return CaMode::kPerLayer;
  throw std::invalid_argument("unknown CA mode '" + std::string(text) +
                              "' (expected none|single|perPair|perLayer)");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("invalid model config: " + msg); };
  if (channels < 1) fail("channels must be positive");
  if (blocks < 1) fail("blocks must be >= 1");
  if (heads < 1 || channels % heads) fail("channels must be divisible by heads");
  if (stls < 1) fail("stls must be >= 1");
  if (window < 1) fail("window must be >= 1");
  if (ca_mode == CaMode::kPerPair && stls % 2) fail("perPair channel attention needs an even STL count");
  if (short_skip && stls % 2) fail("short skip connections need an even STL count");
  if (conv_in_block < 0 || conv_in_block > 2) fail("conv_in_block must be 0, 1 or 2");
  if (conv_in_dfe < 1 || conv_in_dfe > 2) fail("conv_in_dfe must be 1 or 2");
  if (ca_mode != CaMode::kNone && (reduction < 1 || channels / reduction < 1)) {
    fail("reduction must leave at least one channel-attention unit");
  }
  if (unshuffle < 1) fail("unshuffle must be >= 1");
  if (mlp_ratio < 1) fail("mlp_ratio must be >= 1");
}

std::int64_t ModelConfig::ca_hidden() const { return channels / reduction; }

ModelConfig ModelConfig::variant_b() { return {}; }

ModelConfig ModelConfig::variant_s() {
  ModelConfig c;
  c.channels = 96;
  c.blocks = 4;
  return c;
}

ModelConfig ModelConfig::variant_l() {
  ModelConfig c;
  c.channels = 128;
  c.blocks = 4;
  c.heads = 8;
  c.stls = 8;
  return c;
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.channels = 16;
  c.blocks = 1;
  c.heads = 2;
  c.stls = 2;
  c.window = 4;
  c.reduction = 4;
  return c;
}

ModelConfig ModelConfig::preset(std::string_view name) {
  if (name == "B") return variant_b();
  if (name == "S") return variant_s();
  if (name == "L") return variant_l();
  if (name == "tiny") return tiny();
  throw std::invalid_argument("unknown variant '" + std::string(name) + "' (expected B|S|L|tiny)");
}

std::int64_t channel_attention_param_count(const ModelConfig& cfg) {
  const auto c = cfg.channels, hidden = cfg.ca_hidden();
  return 2 * c * hidden + c + hidden;
}

ChannelAttention ChannelAttention::create(std::int64_t channels, std::int64_t hidden,
                                          std::mt19937_64& rng) {
  ChannelAttention ca;
  ca.down_w = detail::fan_in_uniform({channels, hidden}, channels, rng);
  ca.down_b = detail::param_zeros({hidden});
  ca.up_w = detail::fan_in_uniform({hidden, channels}, hidden, rng);
  ca.up_b = detail::param_zeros({channels});
  return ca;
}

Tensor ChannelAttention::scales(const Tensor& pooled) const {
  return sigmoid(linear(relu(linear(pooled, down_w, &down_b)), up_w, &up_b));
}

std::vector<std::pair<std::string, Tensor>> ChannelAttention::parameters() const {
  return {{"down.w", down_w}, {"down.b", down_b}, {"up.w", up_w}, {"up.b", up_b}};
}

Tensor channel_attention_apply(const ChannelAttention& ca, const Tensor& stats,
                               const Tensor& target) {
  if (stats.rank() != 4 || stats.shape() != target.shape()) {
    throw ShapeError("channel attention: stats " + to_string(stats.shape()) + " vs target " +
                     to_string(target.shape()));
  }
  if (stats.dim(1) != ca.down_w.dim(0)) {
    throw ShapeError("channel attention: " + std::to_string(stats.dim(1)) +
                     " channels, gate expects " + std::to_string(ca.down_w.dim(0)));
  }
  const auto b = stats.dim(0), c = stats.dim(1);
  Tensor s = ca.scales(reshape(global_avg_pool(stats), {b, c}));
  return mul(target, reshape(s, {b, c, 1, 1}));
}

Tensor channel_attention_apply_tokens(const ChannelAttention& ca, const Tensor& stats,
                                      const Tensor& target) {
  if (stats.rank() != 3 || stats.shape() != target.shape()) {
    throw ShapeError("channel attention: stats " + to_string(stats.shape()) + " vs target " +
                     to_string(target.shape()));
  }
  if (stats.dim(2) != ca.down_w.dim(0)) {
    throw ShapeError("channel attention: " + std::to_string(stats.dim(2)) +
                     " channels, gate expects " + std::to_string(ca.down_w.dim(0)));
  }
  Tensor s = ca.scales(mean_dim(stats, 1));  // [B, 1, C]
  return mul(target, s);
}

Conv3x3 Conv3x3::create(std::int64_t cin, std::int64_t cout, std::mt19937_64& rng,
                        std::int64_t kernel) {
  Conv3x3 c;
  c.w = detail::fan_in_uniform({cout, cin, kernel, kernel}, cin * kernel * kernel, rng);
  c.b = detail::param_zeros({cout});
  return c;
}

Tensor Conv3x3::operator()(const Tensor& x) const { return conv2d(x, w, &b, Padding::kSame); }

std::vector<std::pair<std::string, Tensor>> RstcabParams::parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t i = 0; i < stls.size(); ++i) {
    for (auto& [n, t] : stls[i].parameters()) out.emplace_back("stl." + std::to_string(i) + "." + n, t);
  }
  if (ca) {
    for (auto& [n, t] : ca->parameters()) out.emplace_back("ca." + n, t);
  }
  for (std::size_t i = 0; i < convs.size(); ++i) {
    out.emplace_back("conv." + std::to_string(i) + ".w", convs[i].w);
    out.emplace_back("conv." + std::to_string(i) + ".b", convs[i].b);
  }
  return out;
}

namespace {

Tensor tokens_to_nchw(const Tensor& x, std::int64_t h, std::int64_t w) {
  const auto b = x.dim(0), c = x.dim(2);
  return permute(reshape(x, {b, h, w, c}), {0, 3, 1, 2});
}

Tensor nchw_to_tokens(const Tensor& x) {
  const auto b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  return reshape(permute(x, {0, 2, 3, 1}), {b, h * w, c});
}

}  // namespace

Tensor rstcab_forward(const RstcabParams& p, const Tensor& x, const WindowSpec& spec,
                      std::int64_t h, std::int64_t w) {
  if (x.rank() != 3 || x.dim(1) != h * w) {
    throw ShapeError("rstcab: tokens " + to_string(x.shape()) + " do not match " +
                     std::to_string(h) + "x" + std::to_string(w));
  }
  const auto n = static_cast<std::int64_t>(p.stls.size());
  const bool pairs = p.ca_mode == CaMode::kPerPair || p.short_skip;
  if (pairs && n % 2) throw std::invalid_argument("rstcab: STL pairing needs an even STL count");
  if (p.ca_mode != CaMode::kNone && !p.ca) {
    throw std::invalid_argument("rstcab: channel attention mode set but no parameters");
  }

  Tensor body = x;
  Tensor pair_in = x;
  for (std::int64_t i = 0; i < n; ++i) {
    if (i % 2 == 0) pair_in = body;
    const Tensor layer_in = body;
    body = stl_forward(body, p.stls[i], spec, i, h, w);
    if (p.ca_mode == CaMode::kPerLayer) body = channel_attention_apply_tokens(*p.ca, layer_in, body);
    if (i % 2 == 1 && pairs) {
      if (p.ca_mode == CaMode::kPerPair) body = channel_attention_apply_tokens(*p.ca, pair_in, body);
      if (p.short_skip) body = add(body, pair_in);
    }
  }
  if (p.ca_mode == CaMode::kSingle) body = channel_attention_apply_tokens(*p.ca, x, body);

  if (!p.convs.empty()) {
    Tensor f = tokens_to_nchw(body, h, w);
    for (const auto& conv : p.convs) f = conv(f);
    body = nchw_to_tokens(f);
  }
  return add(x, body);
}

RstcaNet RstcaNet::build(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  RstcaNet net;
  net.cfg_ = cfg;
  const auto c = cfg.channels;
  const auto packed = cfg.unshuffle * cfg.unshuffle;
  net.embed_w_ = detail::trunc_normal({packed, c}, 0.02f, rng);
  net.embed_b_ = detail::param_zeros({c});
  for (std::int64_t k = 0; k < cfg.blocks; ++k) {
    RstcabParams blk;
    blk.ca_mode = cfg.ca_mode;
    blk.short_skip = cfg.short_skip;
    for (std::int64_t i = 0; i < cfg.stls; ++i) {
      blk.stls.push_back(StlParams::create(c, cfg.heads, cfg.window, cfg.mlp_ratio, rng));
    }
    if (cfg.ca_mode != CaMode::kNone) blk.ca = ChannelAttention::create(c, cfg.ca_hidden(), rng);
    for (std::int64_t i = 0; i < cfg.conv_in_block; ++i) blk.convs.push_back(Conv3x3::create(c, c, rng));
    net.blocks_.push_back(std::move(blk));
  }
  for (std::int64_t i = 0; i < cfg.conv_in_dfe; ++i) net.dfe_convs_.push_back(Conv3x3::create(c, c, rng));
  net.up_ = Conv3x3::create(c, 3 * packed, rng);
  net.recon1_ = Conv3x3::create(3, 3, rng);
  net.recon2_ = Conv3x3::create(3, 3, rng);
  return net;
}

Tensor RstcaNet::shallow_extract(const Tensor& mosaic) const {
  const auto u = cfg_.unshuffle;
  if (mosaic.rank() != 4 || mosaic.dim(1) != 1) {
    throw ShapeError("shallow_extract expects a mosaic [B,1,H,W], got " + to_string(mosaic.shape()));
  }
  if (mosaic.dim(2) % u || mosaic.dim(3) % u) {
    throw ShapeError("shallow_extract: mosaic " + to_string(mosaic.shape()) +
                     " must have spatial dims divisible by " + std::to_string(u) + "; pad first");
  }
  Tensor packed = pixel_unshuffle(mosaic, u);  // [B, u^2, h, w]
  return linear(nchw_to_tokens(packed), embed_w_, &embed_b_);
}

Tensor RstcaNet::deep_extract(const Tensor& tokens, std::int64_t h, std::int64_t w) const {
  const auto m = cfg_.window;
  const auto hp = (h + m - 1) / m * m, wp = (w + m - 1) / m * m;
  Tensor x = tokens;
  if (hp != h || wp != w) x = nchw_to_tokens(reflect_pad_br(tokens_to_nchw(tokens, h, w), hp - h, wp - w));
  const auto spec = window_spec();
  for (const auto& blk : blocks_) x = rstcab_forward(blk, x, spec, hp, wp);
  Tensor f = tokens_to_nchw(x, hp, wp);
  for (const auto& conv : dfe_convs_) f = conv(f);
  return crop_tl(f, h, w);
}

Tensor RstcaNet::reconstruct(const Tensor& features) const {
  if (features.rank() != 4 || features.dim(1) != cfg_.channels) {
    throw ShapeError("reconstruct expects [B," + std::to_string(cfg_.channels) + ",h,w], got " +
                     to_string(features.shape()));
  }
  Tensor x = pixel_shuffle(up_(features), cfg_.unshuffle);
  return recon2_(recon1_(x));
}

Tensor RstcaNet::forward(const Tensor& mosaic) const {
  Tensor s = shallow_extract(mosaic);
  const auto h = mosaic.dim(2) / cfg_.unshuffle, w = mosaic.dim(3) / cfg_.unshuffle;
  Tensor d = deep_extract(s, h, w);
  return reconstruct(add(tokens_to_nchw(s, h, w), d));
}

Tensor RstcaNet::infer(const Tensor& mosaic) const {
  NoGradGuard guard;
  if (mosaic.rank() != 4 || mosaic.dim(1) != 1) {
    throw ShapeError("infer expects a mosaic [B,1,H,W], got " + to_string(mosaic.shape()));
  }
  const auto u = cfg_.unshuffle;
  const auto h = mosaic.dim(2), w = mosaic.dim(3);
  const auto hp = (h + u - 1) / u * u, wp = (w + u - 1) / u * u;
  Tensor y = crop_tl(forward(reflect_pad_br(mosaic, hp - h, wp - w)), h, w);
  Tensor out = y.clone();
  for (auto& v : out.mutable_data()) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

std::vector<std::pair<std::string, Tensor>> RstcaNet::deep_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    for (auto& [n, t] : blocks_[k].parameters()) out.emplace_back("blocks." + std::to_string(k) + "." + n, t);
  }
  for (std::size_t i = 0; i < dfe_convs_.size(); ++i) {
    out.emplace_back("dfe.conv." + std::to_string(i) + ".w", dfe_convs_[i].w);
    out.emplace_back("dfe.conv." + std::to_string(i) + ".b", dfe_convs_[i].b);
  }
  return out;
}

std::vector<std::pair<std::string, Tensor>> RstcaNet::parameters() const {
  std::vector<std::pair<std::string, Tensor>> out{{"embed.w", embed_w_}, {"embed.b", embed_b_}};
  for (auto& p : deep_parameters()) out.push_back(std::move(p));
  out.emplace_back("recon.up.w", up_.w);
  out.emplace_back("recon.up.b", up_.b);
  out.emplace_back("recon.conv1.w", recon1_.w);
  out.emplace_back("recon.conv1.b", recon1_.b);
  out.emplace_back("recon.conv2.w", recon2_.w);
  out.emplace_back("recon.conv2.b", recon2_.b);
  return out;
}

std::int64_t RstcaNet::param_count() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : parameters()) n += t.numel();
  return n;
}

std::int64_t RstcaNet::state_dict_bytes(std::int64_t patch) const {
  const auto m = cfg_.window;
  const auto l = m * m;
  const auto side = patch / cfg_.unshuffle;
  const auto padded = (side + m - 1) / m * m;
  const auto windows = (padded / m) * (padded / m);
  const auto spec = window_spec();
  std::int64_t bytes = param_count() * 4;
  for (const auto& blk : blocks_) {
    for (std::size_t i = 0; i < blk.stls.size(); ++i) {
      bytes += l * l * 8;
      if (i % 2 == 1 && effective_shift(padded, padded, m, spec.shift) != 0) bytes += windows * l * l * 4;
    }
  }
  return bytes;
}

}  // namespace rstca
