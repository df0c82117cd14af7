// Copyright 2026 The rstca Authors
// SPDX-License-Identifier: Apache-2.0

#include "rstca/swin.hpp"

#include <cmath>

#include "init.hpp"

namespace rstca {

void WindowSpec::validate() const {
  if (window < 1) throw std::invalid_argument("window size must be >= 1");
  if (shift < 0 || shift >= window) {
    throw std::invalid_argument("window shift must satisfy 0 <= shift < window");
  }
}

std::vector<std::int64_t> relative_position_index(std::int64_t m) {
  const auto l = m * m;
  const auto span = 2 * m - 1;
  std::vector<std::int64_t> idx(static_cast<std::size_t>(l * l));
  for (std::int64_t i = 0; i < l; ++i) {
    for (std::int64_t j = 0; j < l; ++j) {
      const auto dy = i / m - j / m;
      const auto dx = i % m - j % m;
      idx[i * l + j] = (dy + m - 1) * span + (dx + m - 1);
    }
  }
  return idx;
}

RelativePositionBias RelativePositionBias::create(std::int64_t window, std::int64_t heads) {
  RelativePositionBias b;
  b.window = window;
  b.table = detail::param_zeros({(2 * window - 1) * (2 * window - 1), heads});
  b.index = std::make_shared<const std::vector<std::int64_t>>(relative_position_index(window));
  return b;
}

Tensor RelativePositionBias::lookup() const {
  const auto heads = table.dim(1);
  const auto l = window * window;
  // Fold the head axis into the gather so the result is [heads, L, L] directly.
  auto idx = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(heads * l * l));
  const auto& rel = *index;
  for (std::int64_t h = 0; h < heads; ++h)
    for (std::int64_t p = 0; p < l * l; ++p) (*idx)[h * l * l + p] = rel[p] * heads + h;
  return gather(table, idx, {heads, l, l});
}

StlParams StlParams::create(std::int64_t channels, std::int64_t heads, std::int64_t window,
                            std::int64_t mlp_ratio, std::mt19937_64& rng) {
  if (heads < 1 || channels % heads != 0) {
    throw std::invalid_argument("channels (" + std::to_string(channels) +
                                ") must be divisible by heads (" + std::to_string(heads) + ")");
  }
  StlParams p;
  p.channels = channels;
  p.heads = heads;
  const auto hidden = channels * mlp_ratio;
  p.norm1_gamma = detail::param_ones({channels});
  p.norm1_beta = detail::param_zeros({channels});
  p.qkv_w = detail::trunc_normal({channels, 3 * channels}, 0.02f, rng);
  p.qkv_b = detail::param_zeros({3 * channels});
  p.proj_w = detail::trunc_normal({channels, channels}, 0.02f, rng);
  p.proj_b = detail::param_zeros({channels});
  p.norm2_gamma = detail::param_ones({channels});
  p.norm2_beta = detail::param_zeros({channels});
  p.fc1_w = detail::trunc_normal({channels, hidden}, 0.02f, rng);
  p.fc1_b = detail::param_zeros({hidden});
  p.fc2_w = detail::trunc_normal({hidden, channels}, 0.02f, rng);
  p.fc2_b = detail::param_zeros({channels});
  p.bias = RelativePositionBias::create(window, heads);
  p.bias.table = detail::trunc_normal(p.bias.table.shape(), 0.02f, rng);
  return p;
}

std::vector<std::pair<std::string, Tensor>> StlParams::parameters() const {
  return {{"norm1.gamma", norm1_gamma}, {"norm1.beta", norm1_beta},
          {"attn.qkv.w", qkv_w},        {"attn.qkv.b", qkv_b},
          {"attn.proj.w", proj_w},      {"attn.proj.b", proj_b},
          {"attn.rel_bias", bias.table}, {"norm2.gamma", norm2_gamma},
          {"norm2.beta", norm2_beta},   {"mlp.fc1.w", fc1_w},
          {"mlp.fc1.b", fc1_b},         {"mlp.fc2.w", fc2_w},
          {"mlp.fc2.b", fc2_b}};
}

Tensor window_partition(const Tensor& x, std::int64_t m) {
  if (x.rank() != 4) throw ShapeError("window_partition expects [B,H,W,C], got " + to_string(x.shape()));
  const auto b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (m < 1 || h % m || w % m) {
    throw ShapeError("window_partition: " + to_string(x.shape()) + " not divisible by window " +
                     std::to_string(m));
  }
  const auto nh = h / m, nw = w / m;
  auto idx = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(x.numel()));
  std::int64_t o = 0;
  for (std::int64_t bi = 0; bi < b; ++bi)
    for (std::int64_t wy = 0; wy < nh; ++wy)
      for (std::int64_t wx = 0; wx < nw; ++wx)
        for (std::int64_t iy = 0; iy < m; ++iy)
          for (std::int64_t ix = 0; ix < m; ++ix) {
            const auto base = ((bi * h + wy * m + iy) * w + wx * m + ix) * c;
            for (std::int64_t ci = 0; ci < c; ++ci) (*idx)[o++] = base + ci;
          }
  return gather(x, idx, {b * nh * nw, m * m, c});
}

Tensor window_reverse(const Tensor& windows, std::int64_t m, std::int64_t h, std::int64_t w) {
  if (windows.rank() != 3 || m < 1 || h % m || w % m || windows.dim(1) != m * m) {
    throw ShapeError("window_reverse: " + to_string(windows.shape()) + " inconsistent with window " +
                     std::to_string(m) + " and " + std::to_string(h) + "x" + std::to_string(w));
  }
  const auto nh = h / m, nw = w / m;
  if (windows.dim(0) % (nh * nw)) {
    throw ShapeError("window_reverse: window count " + std::to_string(windows.dim(0)) +
                     " is not a multiple of " + std::to_string(nh * nw));
  }
  const auto b = windows.dim(0) / (nh * nw);
  const auto c = windows.dim(2);
  auto idx = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(windows.numel()));
  std::int64_t o = 0;
  for (std::int64_t bi = 0; bi < b; ++bi)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t xx = 0; xx < w; ++xx) {
        const auto win = (bi * nh + y / m) * nw + xx / m;
        const auto pos = (y % m) * m + xx % m;
        const auto base = (win * m * m + pos) * c;
        for (std::int64_t ci = 0; ci < c; ++ci) (*idx)[o++] = base + ci;
      }
  return gather(windows, idx, {b, h, w, c});
}

Tensor cyclic_shift(const Tensor& x, std::int64_t s) {
  if (x.rank() != 4) throw ShapeError("cyclic_shift expects [B,H,W,C], got " + to_string(x.shape()));
  const auto b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  auto wrap = [](std::int64_t v, std::int64_t n) { return ((v % n) + n) % n; };
  auto idx = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(x.numel()));
  std::int64_t o = 0;
  for (std::int64_t bi = 0; bi < b; ++bi)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t xx = 0; xx < w; ++xx) {
        const auto base = ((bi * h + wrap(y + s, h)) * w + wrap(xx + s, w)) * c;
        for (std::int64_t ci = 0; ci < c; ++ci) (*idx)[o++] = base + ci;
      }
  return gather(x, idx, x.shape());
}

std::int64_t effective_shift(std::int64_t h, std::int64_t w, std::int64_t window,
                             std::int64_t shift) {
  if (h <= window || w <= window) return 0;
  return shift;
}

Tensor attention_mask(std::int64_t h, std::int64_t w, std::int64_t m, std::int64_t shift) {
  if (m < 1 || h % m || w % m) {
    throw ShapeError("attention_mask: " + std::to_string(h) + "x" + std::to_string(w) +
                     " not divisible by window " + std::to_string(m));
  }
  const auto nh = h / m, nw = w / m, l = m * m;
  Tensor mask({nh * nw, l, l});
  const auto s = effective_shift(h, w, m, shift);
  if (s == 0) return mask;
  auto region = [&](std::int64_t v, std::int64_t n) -> std::int64_t {
    if (v < n - m) return 0;
    if (v < n - s) return 1;
    return 2;
  };
  auto md = mask.mutable_data();
  std::vector<std::int64_t> ids(static_cast<std::size_t>(l));
  for (std::int64_t wy = 0; wy < nh; ++wy)
    for (std::int64_t wx = 0; wx < nw; ++wx) {
      for (std::int64_t p = 0; p < l; ++p) {
        ids[p] = region(wy * m + p / m, h) * 3 + region(wx * m + p % m, w);
      }
      float* dst = md.data() + (wy * nw + wx) * l * l;
      for (std::int64_t i = 0; i < l; ++i)
        for (std::int64_t j = 0; j < l; ++j) dst[i * l + j] = ids[i] == ids[j] ? 0.0f : kMaskValue;
    }
  return mask;
}

namespace {

// Selects part `which` (0=q, 1=k, 2=v) of a fused [N, L, 3C] projection laid
// out as [3, heads, hd] per token, as [N, heads, L, hd] or, transposed, [N, heads, hd, L].
Tensor split_heads(const Tensor& qkv, std::int64_t which, std::int64_t heads, bool transpose) {
  const auto n = qkv.dim(0), l = qkv.dim(1), c3 = qkv.dim(2);
  const auto c = c3 / 3, hd = c / heads;
  auto idx = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(n * c * l));
  std::int64_t o = 0;
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t h = 0; h < heads; ++h) {
      if (!transpose) {
        for (std::int64_t t = 0; t < l; ++t)
          for (std::int64_t d = 0; d < hd; ++d)
            (*idx)[o++] = (b * l + t) * c3 + which * c + h * hd + d;
      } else {
        for (std::int64_t d = 0; d < hd; ++d)
          for (std::int64_t t = 0; t < l; ++t)
            (*idx)[o++] = (b * l + t) * c3 + which * c + h * hd + d;
      }
    }
  return transpose ? gather(qkv, idx, {n, heads, hd, l}) : gather(qkv, idx, {n, heads, l, hd});
}

}  // namespace

Tensor window_msa(const Tensor& windows, const StlParams& p, const Tensor& mask) {
  if (windows.rank() != 3 || windows.dim(2) != p.channels) {
    throw ShapeError("window_msa: windows " + to_string(windows.shape()) + " vs channels " +
                     std::to_string(p.channels));
  }
  const auto n = windows.dim(0), l = windows.dim(1), c = p.channels, heads = p.heads;
  if (c % heads) throw ShapeError("window_msa: channels not divisible by heads");
  if (l != p.bias.window * p.bias.window) {
    throw ShapeError("window_msa: window of " + std::to_string(l) +
                     " tokens does not match the relative position table");
  }
  const auto hd = c / heads;
  Tensor qkv = linear(windows, p.qkv_w, &p.qkv_b);
  Tensor q = scale(split_heads(qkv, 0, heads, false), 1.0f / std::sqrt(static_cast<float>(hd)));
  Tensor kt = split_heads(qkv, 1, heads, true);
  Tensor v = split_heads(qkv, 2, heads, false);

  Tensor attn = add(matmul(q, kt), p.bias.lookup());  // [n, heads, L, L]
  if (mask.defined()) {
    const auto nw = mask.dim(0);
    if (mask.dim(1) != l || mask.dim(2) != l || n % nw) {
      throw ShapeError("window_msa: mask " + to_string(mask.shape()) + " incompatible with " +
                       to_string(windows.shape()));
    }
    attn = reshape(add(reshape(attn, {n / nw, nw, heads, l, l}), reshape(mask, {nw, 1, l, l})),
                   {n, heads, l, l});
  }
  attn = softmax_lastdim(attn);
  Tensor out = matmul(attn, v);                               // [n, heads, L, hd]
  out = reshape(permute(out, {0, 2, 1, 3}), {n, l, heads * hd});
  return linear(out, p.proj_w, &p.proj_b);
}

Tensor stl_forward(const Tensor& x, const StlParams& p, const WindowSpec& spec,
                   std::int64_t layer_index, std::int64_t h, std::int64_t w) {
  spec.validate();
  if (x.rank() != 3 || x.dim(1) != h * w || x.dim(2) != p.channels) {
    throw ShapeError("stl_forward: tokens " + to_string(x.shape()) + " do not match " +
                     std::to_string(h) + "x" + std::to_string(w) + "x" +
                     std::to_string(p.channels));
  }
  const auto b = x.dim(0), c = p.channels, m = spec.window;
  const auto s = effective_shift(h, w, m, layer_index % 2 ? spec.shift : 0);

  Tensor y = reshape(layer_norm(x, p.norm1_gamma, p.norm1_beta), {b, h, w, c});
  if (s) y = cyclic_shift(y, s);
  Tensor mask = s ? attention_mask(h, w, m, s) : Tensor();
  y = window_reverse(window_msa(window_partition(y, m), p, mask), m, h, w);
  if (s) y = cyclic_shift(y, -s);
  Tensor out = add(x, reshape(y, {b, h * w, c}));

  Tensor z = layer_norm(out, p.norm2_gamma, p.norm2_beta);
  z = linear(gelu(linear(z, p.fc1_w, &p.fc1_b)), p.fc2_w, &p.fc2_b);
  return add(out, z);
}

}  // namespace rstca
