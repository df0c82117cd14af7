// Copyright 2026 The rstca Authors
// SPDX-License-Identifier: Apache-2.0

#include "rstca/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cassert>
#include <cmath>

namespace rstca {
namespace {

using detail::accumulate;
using detail::record;
using detail::should_record;

#ifndef NDEBUG
void assert_finite(const Tensor& t, const char* op) {
  for (float v : t.data()) {
    if (std::isnan(v)) throw std::logic_error(std::string("NaN produced by ") + op);
  }
}
#else
void assert_finite(const Tensor&, const char*) {}
#endif

std::vector<std::int64_t> contiguous_strides(const Shape& s) {
  std::vector<std::int64_t> st(s.size(), 1);
  for (std::int64_t i = static_cast<std::int64_t>(s.size()) - 2; i >= 0; --i) {
    st[i] = st[i + 1] * s[i + 1];
  }
  return st;
}

// Strides of `in` read through the broadcast to `out` (0 on expanded dims).
std::vector<std::int64_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::int64_t> st(out.size(), 0);
  const auto cs = contiguous_strides(in);
  const auto off = out.size() - in.size();
  for (std::size_t i = 0; i < in.size(); ++i) {
    st[off + i] = (in[i] == 1 && out[off + i] != 1) ? 0 : cs[i];
  }
  return st;
}

// Calls fn(out_index, a_index, b_index) over every element of `out`.
template <typename Fn>
void for_each_broadcast(const Shape& out, const std::vector<std::int64_t>& sa,
                        const std::vector<std::int64_t>& sb, Fn&& fn) {
  const auto n = numel(out);
  if (n == 0) return;
  const std::size_t r = out.size();
  if (r == 0) {
    fn(0, 0, 0);
    return;
  }
  std::vector<std::int64_t> idx(r, 0);
  std::int64_t ia = 0, ib = 0;
  const auto inner = out[r - 1];
  const auto sa_last = sa[r - 1], sb_last = sb[r - 1];
  for (std::int64_t i = 0; i < n; i += inner) {
    for (std::int64_t j = 0; j < inner; ++j) fn(i + j, ia + j * sa_last, ib + j * sb_last);
    for (std::int64_t d = static_cast<std::int64_t>(r) - 2; d >= 0; --d) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < out[d]) break;
      ia -= sa[d] * out[d];
      ib -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

float sigmoidf(float x) { return 1.0f / (1.0f + std::exp(-x)); }

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

Tensor unary(ElementwiseOp op, const Tensor& x, float alpha) {
  Tensor out(x.shape());
  auto xd = x.data();
  auto od = out.mutable_data();
  const auto n = xd.size();
  switch (op) {
    case ElementwiseOp::kSigmoid:
      for (std::size_t i = 0; i < n; ++i) od[i] = sigmoidf(xd[i]);
      break;
    case ElementwiseOp::kGelu:
      for (std::size_t i = 0; i < n; ++i) {
        const double v = xd[i];
        od[i] = static_cast<float>(0.5 * v * (1.0 + std::erf(v * kInvSqrt2)));
      }
      break;
    case ElementwiseOp::kRelu:
      for (std::size_t i = 0; i < n; ++i) od[i] = xd[i] > 0.0f ? xd[i] : 0.0f;
      break;
    case ElementwiseOp::kScale:
      for (std::size_t i = 0; i < n; ++i) od[i] = xd[i] * alpha;
      break;
    default:
      throw std::invalid_argument("unary(): not a unary op");
  }
  assert_finite(out, "elementwise");
  if (should_record({&x})) {
    record({x}, out, [x, out, op, alpha]() mutable {
      auto g = out.grad();
      auto xv = x.data();
      auto yv = out.data();
      std::vector<float> gx(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) {
        switch (op) {
          case ElementwiseOp::kSigmoid:
            gx[i] = g[i] * yv[i] * (1.0f - yv[i]);
            break;
          case ElementwiseOp::kGelu: {
            const double v = xv[i];
            const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
            gx[i] = static_cast<float>(g[i] * (cdf + v * pdf));
            break;
          }
          case ElementwiseOp::kRelu:
            gx[i] = xv[i] > 0.0f ? g[i] : 0.0f;
            break;
          default:
            gx[i] = g[i] * alpha;
        }
      }
      accumulate(x, gx);
    });
  }
  return out;
}

Tensor binary(ElementwiseOp op, const Tensor& a, const Tensor& b) {
  const Shape os = broadcast_shapes(a.shape(), b.shape());
  Tensor out(os);
  auto ad = a.data();
  auto bd = b.data();
  auto od = out.mutable_data();
  const bool same = a.shape() == b.shape();
  auto apply = [op](float x, float y) {
    switch (op) {
      case ElementwiseOp::kAdd:
        return x + y;
      case ElementwiseOp::kSub:
        return x - y;
      default:
        return x * y;
    }
  };
  const auto sa = broadcast_strides(a.shape(), os);
  const auto sb = broadcast_strides(b.shape(), os);
  if (same) {
    for (std::size_t i = 0; i < od.size(); ++i) od[i] = apply(ad[i], bd[i]);
  } else {
    for_each_broadcast(os, sa, sb, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
      od[i] = apply(ad[ia], bd[ib]);
    });
  }
  assert_finite(out, "elementwise");
  if (should_record({&a, &b})) {
    record({a, b}, out, [a, b, out, op, sa, sb]() mutable {
      auto g = out.grad();
      std::vector<float> ga(a.requires_grad() ? a.numel() : 0, 0.0f);
      std::vector<float> gb(b.requires_grad() ? b.numel() : 0, 0.0f);
      auto av = a.data();
      auto bv = b.data();
      for_each_broadcast(out.shape(), sa, sb,
                         [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
                           const float gi = g[i];
                           switch (op) {
                             case ElementwiseOp::kAdd:
                               if (!ga.empty()) ga[ia] += gi;
                               if (!gb.empty()) gb[ib] += gi;
                               break;
                             case ElementwiseOp::kSub:
                               if (!ga.empty()) ga[ia] += gi;
                               if (!gb.empty()) gb[ib] -= gi;
                               break;
                             default:
                               if (!ga.empty()) ga[ia] += gi * bv[ib];
                               if (!gb.empty()) gb[ib] += gi * av[ia];
                           }
                         });
      if (!ga.empty()) accumulate(a, ga);
      if (!gb.empty()) accumulate(b, gb);
    });
  }
  return out;
}

// Row-major C[m,n] (+)= op(A) * op(B).
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k,
          const float* a, std::int64_t lda, const float* b, std::int64_t ldb, float beta, float* c,
          std::int64_t ldc) {
  if (m == 0 || n == 0) return;
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
              static_cast<int>(k), 1.0f, a, static_cast<int>(lda), b, static_cast<int>(ldb), beta,
              c, static_cast<int>(ldc));
}

// Offsets of each broadcast batch entry into a tensor with the given batch shape.
std::vector<std::int64_t> batch_offsets(const Shape& batch, const Shape& out_batch,
                                        std::int64_t matrix_size) {
  const auto st = broadcast_strides(batch, out_batch);
  std::vector<std::int64_t> offs;
  offs.reserve(static_cast<std::size_t>(numel(out_batch)));
  if (out_batch.empty()) {
    offs.push_back(0);
    return offs;
  }
  for_each_broadcast(out_batch, st, st,
                     [&](std::int64_t, std::int64_t ia, std::int64_t) {
                       offs.push_back(ia * matrix_size);
                     });
  return offs;
}

struct Im2col {
  std::int64_t cin, h, w, kh, kw, pad_h, pad_w, ho, wo;
  // cols[(c*kh + ky)*kw + kx][(y - y0)*wo + x]
  void fill(const float* img, std::int64_t y0, std::int64_t y1, float* cols) const {
    const auto span = (y1 - y0) * wo;
    for (std::int64_t c = 0; c < cin; ++c)
      for (std::int64_t ky = 0; ky < kh; ++ky)
        for (std::int64_t kx = 0; kx < kw; ++kx) {
          float* row = cols + ((c * kh + ky) * kw + kx) * span;
          for (std::int64_t y = y0; y < y1; ++y) {
            const auto iy = y + ky - pad_h;
            float* dst = row + (y - y0) * wo;
            if (iy < 0 || iy >= h) {
              std::fill(dst, dst + wo, 0.0f);
              continue;
            }
            const float* src = img + (c * h + iy) * w;
            for (std::int64_t x = 0; x < wo; ++x) {
              const auto ix = x + kx - pad_w;
              dst[x] = (ix >= 0 && ix < w) ? src[ix] : 0.0f;
            }
          }
        }
  }
  void scatter(const float* cols, std::int64_t y0, std::int64_t y1, float* img) const {
    const auto span = (y1 - y0) * wo;
    for (std::int64_t c = 0; c < cin; ++c)
      for (std::int64_t ky = 0; ky < kh; ++ky)
        for (std::int64_t kx = 0; kx < kw; ++kx) {
          const float* row = cols + ((c * kh + ky) * kw + kx) * span;
          for (std::int64_t y = y0; y < y1; ++y) {
            const auto iy = y + ky - pad_h;
            if (iy < 0 || iy >= h) continue;
            const float* src = row + (y - y0) * wo;
            float* dst = img + (c * h + iy) * w;
            for (std::int64_t x = 0; x < wo; ++x) {
              const auto ix = x + kx - pad_w;
              if (ix >= 0 && ix < w) dst[ix] += src[x];
            }
          }
        }
  }
  // Output rows per tile so that the column buffer stays bounded.
  std::int64_t tile_rows() const {
    constexpr std::int64_t kMaxCols = std::int64_t{1} << 22;
    const auto per_row = std::max<std::int64_t>(1, cin * kh * kw * wo);
    return std::clamp<std::int64_t>(kMaxCols / per_row, 1, std::max<std::int64_t>(ho, 1));
  }
};

}  // namespace

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const auto r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    const auto da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const auto db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("cannot broadcast shapes " + to_string(a) + " and " + to_string(b));
    }
    out[i] = da == 1 ? db : da;
  }
  return out;
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor* b, float alpha) {
  switch (op) {
    case ElementwiseOp::kAdd:
    case ElementwiseOp::kSub:
    case ElementwiseOp::kMul:
      if (!b) throw std::invalid_argument("binary elementwise op needs a second operand");
      return binary(op, a, *b);
    default:
      return unary(op, a, alpha);
  }
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(ElementwiseOp::kAdd, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(ElementwiseOp::kSub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(ElementwiseOp::kMul, a, b); }
Tensor sigmoid(const Tensor& x) { return unary(ElementwiseOp::kSigmoid, x, 1.0f); }
Tensor gelu(const Tensor& x) { return unary(ElementwiseOp::kGelu, x, 1.0f); }
Tensor relu(const Tensor& x) { return unary(ElementwiseOp::kRelu, x, 1.0f); }
Tensor scale(const Tensor& x, float alpha) { return unary(ElementwiseOp::kScale, x, alpha); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw ShapeError("matmul needs rank >= 2 operands, got " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  }
  const auto m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
  if (b.dim(-2) != k) {
    throw ShapeError("matmul inner dimensions differ: " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  const Shape ab(a.shape().begin(), a.shape().end() - 2);
  const Shape bb(b.shape().begin(), b.shape().end() - 2);
  Shape ob = broadcast_shapes(ab, bb);
  const auto a_offs = batch_offsets(ab, ob, m * k);
  const auto b_offs = batch_offsets(bb, ob, k * n);
  Shape os = ob;
  os.push_back(m);
  os.push_back(n);
  Tensor out(os);
  const float* ad = a.data().data();
  const float* bd = b.data().data();
  float* od = out.mutable_data().data();
  for (std::size_t i = 0; i < a_offs.size(); ++i) {
    gemm(false, false, m, n, k, ad + a_offs[i], k, bd + b_offs[i], n, 0.0f,
         od + static_cast<std::int64_t>(i) * m * n, n);
  }
  assert_finite(out, "matmul");
  if (should_record({&a, &b})) {
    record({a, b}, out, [a, b, out, a_offs, b_offs, m, n, k]() mutable {
      const float* g = out.grad().data();
      const float* av = a.data().data();
      const float* bv = b.data().data();
      if (a.requires_grad()) {
        std::vector<float> ga(a.numel(), 0.0f);
        for (std::size_t i = 0; i < a_offs.size(); ++i) {
          gemm(false, true, m, k, n, g + static_cast<std::int64_t>(i) * m * n, n,
               bv + b_offs[i], n, 1.0f, ga.data() + a_offs[i], k);
        }
        accumulate(a, ga);
      }
      if (b.requires_grad()) {
        std::vector<float> gb(b.numel(), 0.0f);
        for (std::size_t i = 0; i < b_offs.size(); ++i) {
          gemm(true, false, k, n, m, av + a_offs[i], k, g + static_cast<std::int64_t>(i) * m * n,
               n, 1.0f, gb.data() + b_offs[i], n);
        }
        accumulate(b, gb);
      }
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor* bias) {
  if (w.rank() != 2 || x.rank() < 1 || x.dim(-1) != w.dim(0)) {
    throw ShapeError("linear: input " + to_string(x.shape()) + " incompatible with weight " +
                     to_string(w.shape()));
  }
  const auto in = w.dim(0), outd = w.dim(1);
  if (bias && (bias->rank() != 1 || bias->dim(0) != outd)) {
    throw ShapeError("linear: bias " + to_string(bias->shape()) + " does not match weight " +
                     to_string(w.shape()));
  }
  const auto rows = x.numel() / std::max<std::int64_t>(in, 1);
  Shape os = x.shape();
  os.back() = outd;
  Tensor out(os);
  float* od = out.mutable_data().data();
  if (bias) {
    auto bd = bias->data();
    for (std::int64_t r = 0; r < rows; ++r) std::copy(bd.begin(), bd.end(), od + r * outd);
  }
  gemm(false, false, rows, outd, in, x.data().data(), in, w.data().data(), outd,
       bias ? 1.0f : 0.0f, od, outd);
  assert_finite(out, "linear");
  if (should_record({&x, &w, bias})) {
    Tensor b = bias ? *bias : Tensor();
    record({x, w, b}, out, [x, w, b, out, rows, in, outd]() mutable {
      const float* g = out.grad().data();
      if (x.requires_grad()) {
        std::vector<float> gx(x.numel(), 0.0f);
        gemm(false, true, rows, in, outd, g, outd, w.data().data(), outd, 0.0f, gx.data(), in);
        accumulate(x, gx);
      }
      if (w.requires_grad()) {
        std::vector<float> gw(w.numel(), 0.0f);
        gemm(true, false, in, outd, rows, x.data().data(), in, g, outd, 0.0f, gw.data(), outd);
        accumulate(w, gw);
      }
      if (b.defined() && b.requires_grad()) {
        std::vector<double> acc(outd, 0.0);
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t j = 0; j < outd; ++j) acc[j] += g[r * outd + j];
        std::vector<float> gb(acc.begin(), acc.end());
        accumulate(b, gb);
      }
    });
  }
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, Padding padding) {
  if (x.rank() != 4 || w.rank() != 4) {
    throw ShapeError("conv2d expects x[B,C,H,W] and w[Cout,Cin,kh,kw], got " +
                     to_string(x.shape()) + " and " + to_string(w.shape()));
  }
  const auto bsz = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const auto cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != cin) {
    throw ShapeError("conv2d channel mismatch: input " + to_string(x.shape()) + " vs weight " +
                     to_string(w.shape()));
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != cout)) {
    throw ShapeError("conv2d bias " + to_string(bias->shape()) + " does not match " +
                     std::to_string(cout) + " output channels");
  }
  Im2col geo{cin, h, wd, kh, kw, 0, 0, 0, 0};
  if (padding == Padding::kSame) {
    if (kh % 2 == 0 || kw % 2 == 0) throw ShapeError("same padding needs odd kernel sizes");
    geo.pad_h = kh / 2;
    geo.pad_w = kw / 2;
    geo.ho = h;
    geo.wo = wd;
  } else {
    geo.ho = h - kh + 1;
    geo.wo = wd - kw + 1;
    if (geo.ho <= 0 || geo.wo <= 0) throw ShapeError("valid conv kernel larger than input");
  }
  const auto kdim = cin * kh * kw;
  const auto plane = geo.ho * geo.wo;
  Tensor out({bsz, cout, geo.ho, geo.wo});
  float* od = out.mutable_data().data();
  const float* xd = x.data().data();
  const float* wdat = w.data().data();
  const auto tile = geo.tile_rows();
  std::vector<float> cols(static_cast<std::size_t>(kdim * tile * geo.wo));
  for (std::int64_t b = 0; b < bsz; ++b) {
    float* ob = od + b * cout * plane;
    if (bias) {
      auto bd = bias->data();
      for (std::int64_t c = 0; c < cout; ++c) std::fill(ob + c * plane, ob + (c + 1) * plane, bd[c]);
    }
    for (std::int64_t y0 = 0; y0 < geo.ho; y0 += tile) {
      const auto y1 = std::min(geo.ho, y0 + tile);
      geo.fill(xd + b * cin * h * wd, y0, y1, cols.data());
      gemm(false, false, cout, (y1 - y0) * geo.wo, kdim, wdat, kdim, cols.data(),
           (y1 - y0) * geo.wo, bias ? 1.0f : 0.0f, ob + y0 * geo.wo, plane);
    }
  }
  assert_finite(out, "conv2d");
  if (should_record({&x, &w, bias})) {
    Tensor bt = bias ? *bias : Tensor();
    record({x, w, bt}, out, [x, w, bt, out, geo, bsz, cin, cout, kdim, plane, tile]() mutable {
      const float* g = out.grad().data();
      const float* xv = x.data().data();
      const float* wv = w.data().data();
      std::vector<float> cols(static_cast<std::size_t>(kdim * tile * geo.wo));
      std::vector<float> gx(x.requires_grad() ? x.numel() : 0, 0.0f);
      std::vector<float> gw(w.requires_grad() ? w.numel() : 0, 0.0f);
      const auto img = cin * geo.h * geo.w;
      for (std::int64_t b = 0; b < bsz; ++b) {
        const float* gb = g + b * cout * plane;
        for (std::int64_t y0 = 0; y0 < geo.ho; y0 += tile) {
          const auto y1 = std::min(geo.ho, y0 + tile);
          const auto cn = (y1 - y0) * geo.wo;
          if (!gw.empty()) {
            geo.fill(xv + b * img, y0, y1, cols.data());
            gemm(false, true, cout, kdim, cn, gb + y0 * geo.wo, plane, cols.data(), cn, 1.0f,
                 gw.data(), kdim);
          }
          if (!gx.empty()) {
            gemm(true, false, kdim, cn, cout, wv, kdim, gb + y0 * geo.wo, plane, 0.0f, cols.data(),
                 cn);
            geo.scatter(cols.data(), y0, y1, gx.data() + b * img);
          }
        }
      }
      if (!gx.empty()) accumulate(x, gx);
      if (!gw.empty()) accumulate(w, gw);
      if (bt.defined() && bt.requires_grad()) {
        std::vector<float> gbias(cout);
        for (std::int64_t c = 0; c < cout; ++c) {
          double acc = 0.0;
          for (std::int64_t b = 0; b < bsz; ++b) {
            const float* p = g + (b * cout + c) * plane;
            for (std::int64_t i = 0; i < plane; ++i) acc += p[i];
          }
          gbias[c] = static_cast<float>(acc);
        }
        accumulate(bt, gbias);
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  if (x.rank() < 1) throw ShapeError("layer_norm needs rank >= 1");
  const auto c = x.dim(-1);
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    throw ShapeError("layer_norm affine shapes " + to_string(gamma.shape()) + "/" +
                     to_string(beta.shape()) + " do not match last dim of " +
                     to_string(x.shape()));
  }
  const auto rows = c ? x.numel() / c : 0;
  Tensor out(x.shape());
  std::vector<float> xhat(x.numel());
  std::vector<float> rstd(rows);
  auto xd = x.data();
  auto gd = gamma.data();
  auto bd = beta.data();
  auto od = out.mutable_data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const float* p = xd.data() + r * c;
    double mu = 0.0;
    for (std::int64_t i = 0; i < c; ++i) mu += p[i];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::int64_t i = 0; i < c; ++i) var += (p[i] - mu) * (p[i] - mu);
    var /= static_cast<double>(c);
    const double rs = 1.0 / std::sqrt(var + static_cast<double>(eps));
    rstd[r] = static_cast<float>(rs);
    for (std::int64_t i = 0; i < c; ++i) {
      const float xh = static_cast<float>((p[i] - mu) * rs);
      xhat[r * c + i] = xh;
      od[r * c + i] = xh * gd[i] + bd[i];
    }
  }
  assert_finite(out, "layer_norm");
  if (should_record({&x, &gamma, &beta})) {
    record({x, gamma, beta}, out,
           [x, gamma, beta, out, xhat = std::move(xhat), rstd = std::move(rstd), rows,
            c]() mutable {
             auto g = out.grad();
             auto gd = gamma.data();
             std::vector<double> ggam(c, 0.0), gbet(c, 0.0);
             std::vector<float> gx(x.requires_grad() ? x.numel() : 0);
             for (std::int64_t r = 0; r < rows; ++r) {
               const float* gr = g.data() + r * c;
               const float* xh = xhat.data() + r * c;
               double mean_d = 0.0, mean_dx = 0.0;
               for (std::int64_t i = 0; i < c; ++i) {
                 const double d = static_cast<double>(gr[i]) * gd[i];
                 mean_d += d;
                 mean_dx += d * xh[i];
                 ggam[i] += static_cast<double>(gr[i]) * xh[i];
                 gbet[i] += gr[i];
               }
               mean_d /= static_cast<double>(c);
               mean_dx /= static_cast<double>(c);
               if (!gx.empty()) {
                 for (std::int64_t i = 0; i < c; ++i) {
                   const double d = static_cast<double>(gr[i]) * gd[i];
                   gx[r * c + i] = static_cast<float>(rstd[r] * (d - mean_d - xh[i] * mean_dx));
                 }
               }
             }
             if (!gx.empty()) accumulate(x, gx);
             std::vector<float> gg(ggam.begin(), ggam.end()), gbv(gbet.begin(), gbet.end());
             accumulate(gamma, gg);
             accumulate(beta, gbv);
           });
  }
  return out;
}

Tensor softmax_lastdim(const Tensor& x) {
  if (x.rank() < 1) throw ShapeError("softmax needs rank >= 1");
  const auto c = x.dim(-1);
  const auto rows = c ? x.numel() / c : 0;
  Tensor out(x.shape());
  auto xd = x.data();
  auto od = out.mutable_data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const float* p = xd.data() + r * c;
    float* q = od.data() + r * c;
    const float mx = *std::max_element(p, p + c);
    double s = 0.0;
    for (std::int64_t i = 0; i < c; ++i) {
      const double e = std::exp(static_cast<double>(p[i]) - mx);
      q[i] = static_cast<float>(e);
      s += e;
    }
    const double inv = 1.0 / s;
    for (std::int64_t i = 0; i < c; ++i) q[i] = static_cast<float>(q[i] * inv);
  }
  assert_finite(out, "softmax");
  if (should_record({&x})) {
    record({x}, out, [x, out, rows, c]() mutable {
      auto g = out.grad();
      auto y = out.data();
      std::vector<float> gx(x.numel());
      for (std::int64_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::int64_t i = 0; i < c; ++i) dot += static_cast<double>(g[r * c + i]) * y[r * c + i];
        for (std::int64_t i = 0; i < c; ++i) {
          gx[r * c + i] = static_cast<float>(y[r * c + i] * (g[r * c + i] - dot));
        }
      }
      accumulate(x, gx);
    });
  }
  return out;
}

Tensor mean_dim(const Tensor& x, std::int64_t dim) {
  const auto r = x.rank();
  const auto d = dim < 0 ? dim + r : dim;
  if (d < 0 || d >= r) throw ShapeError("mean_dim: dimension out of range for " + to_string(x.shape()));
  const auto& s = x.shape();
  std::int64_t outer = 1, inner = 1;
  for (std::int64_t i = 0; i < d; ++i) outer *= s[i];
  for (std::int64_t i = d + 1; i < r; ++i) inner *= s[i];
  const auto len = s[d];
  if (len < 1) throw ShapeError("mean_dim over an empty dimension");
  Shape os = s;
  os[d] = 1;
  Tensor out(os);
  auto xd = x.data();
  auto od = out.mutable_data();
  std::vector<double> acc(inner);
  for (std::int64_t o = 0; o < outer; ++o) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::int64_t l = 0; l < len; ++l) {
      const float* p = xd.data() + (o * len + l) * inner;
      for (std::int64_t i = 0; i < inner; ++i) acc[i] += p[i];
    }
    for (std::int64_t i = 0; i < inner; ++i) {
      od[o * inner + i] = static_cast<float>(acc[i] / static_cast<double>(len));
    }
  }
  if (should_record({&x})) {
    record({x}, out, [x, out, outer, inner, len]() mutable {
      auto g = out.grad();
      std::vector<float> gx(x.numel());
      const float inv = 1.0f / static_cast<float>(len);
      for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t l = 0; l < len; ++l)
          for (std::int64_t i = 0; i < inner; ++i)
            gx[(o * len + l) * inner + i] = g[o * inner + i] * inv;
      accumulate(x, gx);
    });
  }
  return out;
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("global_avg_pool expects [B,C,H,W], got " + to_string(x.shape()));
  if (x.dim(2) < 1 || x.dim(3) < 1) throw ShapeError("global_avg_pool needs H,W >= 1");
  const auto b = x.dim(0), c = x.dim(1);
  auto flat = reshape(x, {b, c, x.dim(2) * x.dim(3)});
  return reshape(mean_dim(flat, 2), {b, c, 1, 1});
}

Tensor gather(const Tensor& x, IndexMap index, Shape out_shape) {
  if (!index || static_cast<std::int64_t>(index->size()) != numel(out_shape)) {
    throw ShapeError("gather: index size does not match output shape " + to_string(out_shape));
  }
  Tensor out(std::move(out_shape));
  auto xd = x.data();
  auto od = out.mutable_data();
  const auto& idx = *index;
  for (std::size_t i = 0; i < idx.size(); ++i) od[i] = xd[static_cast<std::size_t>(idx[i])];
  if (should_record({&x})) {
    record({x}, out, [x, out, index]() mutable {
      auto g = out.grad();
      std::vector<float> gx(x.numel(), 0.0f);
      const auto& id = *index;
      for (std::size_t i = 0; i < id.size(); ++i) gx[static_cast<std::size_t>(id[i])] += g[i];
      accumulate(x, gx);
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw ShapeError("reshape from " + to_string(x.shape()) + " to " + to_string(shape));
  }
  Tensor out(std::move(shape), std::vector<float>(x.data().begin(), x.data().end()));
  if (should_record({&x})) {
    record({x}, out, [x, out]() mutable { accumulate(x, out.grad()); });
  }
  return out;
}

Tensor permute(const Tensor& x, const std::vector<std::int64_t>& perm) {
  const auto r = x.rank();
  if (static_cast<std::int64_t>(perm.size()) != r) {
    throw ShapeError("permute: rank mismatch for " + to_string(x.shape()));
  }
  std::vector<bool> seen(r, false);
  for (auto p : perm) {
    if (p < 0 || p >= r || seen[p]) throw ShapeError("permute: invalid permutation");
    seen[p] = true;
  }
  const auto& s = x.shape();
  const auto st = contiguous_strides(s);
  Shape os(r);
  std::vector<std::int64_t> pst(r);
  for (std::int64_t i = 0; i < r; ++i) {
    os[i] = s[perm[i]];
    pst[i] = st[perm[i]];
  }
  auto idx = std::make_shared<std::vector<std::int64_t>>();
  idx->reserve(x.numel());
  for_each_broadcast(os, pst, pst,
                     [&](std::int64_t, std::int64_t ia, std::int64_t) { idx->push_back(ia); });
  if (r == 0) idx->assign(1, 0);
  return gather(x, idx, os);
}

Tensor pixel_unshuffle(const Tensor& x, std::int64_t r) {
  if (x.rank() != 4 || r < 1) throw ShapeError("pixel_unshuffle expects [B,C,H,W] and r >= 1");
  const auto b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % r || w % r) {
    throw ShapeError("pixel_unshuffle: spatial dims of " + to_string(x.shape()) +
                     " not divisible by " + std::to_string(r));
  }
  const auto ho = h / r, wo = w / r;
  auto idx = std::make_shared<std::vector<std::int64_t>>(x.numel());
  std::int64_t o = 0;
  for (std::int64_t bi = 0; bi < b; ++bi)
    for (std::int64_t ci = 0; ci < c; ++ci)
      for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < r; ++j)
          for (std::int64_t y = 0; y < ho; ++y)
            for (std::int64_t xx = 0; xx < wo; ++xx)
              (*idx)[o++] = ((bi * c + ci) * h + y * r + i) * w + xx * r + j;
  return gather(x, idx, {b, c * r * r, ho, wo});
}

Tensor pixel_shuffle(const Tensor& x, std::int64_t r) {
  if (x.rank() != 4 || r < 1) throw ShapeError("pixel_shuffle expects [B,C,H,W] and r >= 1");
  const auto b = x.dim(0), cr = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (cr % (r * r)) {
    throw ShapeError("pixel_shuffle: channels of " + to_string(x.shape()) +
                     " not divisible by r^2");
  }
  const auto c = cr / (r * r);
  auto idx = std::make_shared<std::vector<std::int64_t>>(x.numel());
  std::int64_t o = 0;
  for (std::int64_t bi = 0; bi < b; ++bi)
    for (std::int64_t ci = 0; ci < c; ++ci)
      for (std::int64_t y = 0; y < h * r; ++y)
        for (std::int64_t xx = 0; xx < w * r; ++xx) {
          const auto ch = ci * r * r + (y % r) * r + (xx % r);
          (*idx)[o++] = ((bi * cr + ch) * h + y / r) * w + xx / r;
        }
  return gather(x, idx, {b, c, h * r, w * r});
}

std::int64_t reflect_index(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  const auto period = 2 * (n - 1);
  auto m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - m;
}

Tensor reflect_pad_br(const Tensor& x, std::int64_t pad_h, std::int64_t pad_w) {
  if (x.rank() != 4 || pad_h < 0 || pad_w < 0) throw ShapeError("reflect_pad_br expects [B,C,H,W]");
  if (pad_h == 0 && pad_w == 0) return x;
  const auto b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto ho = h + pad_h, wo = w + pad_w;
  auto idx = std::make_shared<std::vector<std::int64_t>>(b * c * ho * wo);
  std::int64_t o = 0;
  for (std::int64_t p = 0; p < b * c; ++p)
    for (std::int64_t y = 0; y < ho; ++y)
      for (std::int64_t xx = 0; xx < wo; ++xx)
        (*idx)[o++] = (p * h + reflect_index(y, h)) * w + reflect_index(xx, w);
  return gather(x, idx, {b, c, ho, wo});
}

Tensor crop_tl(const Tensor& x, std::int64_t h, std::int64_t w) {
  if (x.rank() != 4 || h > x.dim(2) || w > x.dim(3) || h < 0 || w < 0) {
    throw ShapeError("crop_tl: cannot crop " + to_string(x.shape()) + " to " + std::to_string(h) +
                     "x" + std::to_string(w));
  }
  if (h == x.dim(2) && w == x.dim(3)) return x;
  const auto b = x.dim(0), c = x.dim(1), hi = x.dim(2), wi = x.dim(3);
  auto idx = std::make_shared<std::vector<std::int64_t>>(b * c * h * w);
  std::int64_t o = 0;
  for (std::int64_t p = 0; p < b * c; ++p)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t xx = 0; xx < w; ++xx) (*idx)[o++] = (p * hi + y) * wi + xx;
  return gather(x, idx, {b, c, h, w});
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  Tensor out = Tensor::scalar(static_cast<float>(acc));
  if (should_record({&x})) {
    record({x}, out, [x, out]() mutable {
      std::vector<float> gx(x.numel(), out.grad()[0]);
      accumulate(x, gx);
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(x), 1.0f / static_cast<float>(x.numel()));
}

}  // namespace rstca
