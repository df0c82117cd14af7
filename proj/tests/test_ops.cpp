// Copyright 2026 The rstca Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>

#include "rstca/gradcheck.hpp"
#include "rstca/ops.hpp"
#include "synthetic.hpp"

using namespace rstca;
using rstca::testing::random_tensor;
using rstca::testing::values;

namespace {

void require_grads(const std::vector<GradCheckResult>& results) {
  for (const auto& r : results) {
    INFO(r.name << " rel " << r.max_rel_error << " elementwise " << r.max_elementwise_rel_error);
    CHECK(r.max_rel_error < 1e-3);
  }
}

}  // namespace

TEST_CASE("elementwise examples") {
  Tensor a({2}, std::vector<float>{1, 2}), b({2}, std::vector<float>{3, 4});
  Tensor s = add(a, b);
  CHECK(s.data()[0] == 4);
  CHECK(s.data()[1] == 6);
  for (float v : values(sigmoid(Tensor({3})))) CHECK(v == 0.5f);
  // 1.0 * Phi(1.0); Phi(1) = 0.841344746...
  CHECK(gelu(Tensor({1}, 1.0f)).item() == doctest::Approx(0.8413447).epsilon(1e-6));
  CHECK(relu(Tensor({1}, -2.0f)).item() == 0.0f);
}

TEST_CASE("broadcasting") {
  CHECK(broadcast_shapes({2, 1, 4}, {3, 1}) == Shape{2, 3, 4});
  CHECK_THROWS_AS(broadcast_shapes({2, 3}, {4}), ShapeError);
  Tensor a({2, 3}, 1.0f), b({3}, std::vector<float>{1, 2, 3});
  Tensor c = mul(a, b);
  CHECK(c.at({1, 2}) == 3.0f);
}

TEST_CASE("matmul examples") {
  Tensor a({2, 2}, std::vector<float>{1, 2, 3, 4}), v({2, 1}, 1.0f);
  Tensor r = matmul(a, v);
  CHECK(r.shape() == Shape{2, 1});
  CHECK(r.data()[0] == 3);
  CHECK(r.data()[1] == 7);
  Tensor eye({3, 3}, std::vector<float>{1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor m = random_tensor({3, 4}, 1);
  Tensor p = matmul(eye, m);
  for (std::int64_t i = 0; i < m.numel(); ++i) CHECK(p.data()[i] == m.data()[i]);
  CHECK_THROWS_AS(matmul(Tensor({2, 3}), Tensor({2, 3})), ShapeError);
}

TEST_CASE("conv2d examples") {
  Tensor x = random_tensor({1, 2, 5, 5}, 2);
  Tensor id({2, 2, 1, 1}, std::vector<float>{1, 0, 0, 1});
  Tensor y = conv2d(x, id);
  for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);

  Tensor ones({1, 1, 5, 5}, 1.0f), k({1, 1, 3, 3}, 1.0f);
  Tensor c = conv2d(ones, k, nullptr, Padding::kSame);
  CHECK(c.at({0, 0, 2, 2}) == 9);
  CHECK(c.at({0, 0, 0, 2}) == 6);
  CHECK(c.at({0, 0, 0, 0}) == 4);
  CHECK(conv2d(ones, k, nullptr, Padding::kValid).shape() == Shape{1, 1, 3, 3});
}

TEST_CASE("layer_norm examples") {
  Tensor g({4}, 1.0f), b({4}, 0.0f);
  for (float v : values(layer_norm(Tensor({2, 4}, 3.0f), g, b))) CHECK(v == 0.0f);
  Tensor g0({4}, 0.0f), bb({4}, 0.7f);
  for (float v : values(layer_norm(random_tensor({3, 4}, 3), g0, bb))) CHECK(v == doctest::Approx(0.7f));
}

TEST_CASE("softmax examples") {
  for (float v : values(softmax_lastdim(Tensor({3})))) CHECK(v == doctest::Approx(1.0 / 3));
  const float x = 0.3f, c = 1.7f;
  Tensor s = softmax_lastdim(Tensor({2}, std::vector<float>{x, x + c}));
  CHECK(s.data()[0] == doctest::Approx(1 / (1 + std::exp(c))));
  CHECK(s.data()[1] == doctest::Approx(std::exp(c) / (1 + std::exp(c))));
  Tensor m = softmax_lastdim(Tensor({3}, std::vector<float>{0.5f, -1e9f, 0.1f}));
  CHECK(m.data()[1] < 1e-8f);
}

TEST_CASE("global average pool") {
  CHECK(global_avg_pool(Tensor({1, 1, 3, 3}, 0.25f)).item() == 0.25f);
  Tensor x({1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4}, true);
  Tape tape;
  Tensor p = global_avg_pool(x);
  CHECK(p.item() == 2.5f);
  tape.backward(sum(p));
  for (float g : x.grad()) CHECK(g == 0.25f);
}

TEST_CASE("pixel shuffle examples") {
  Tensor x = random_tensor({2, 3, 6, 6}, 4);
  Tensor same = pixel_unshuffle(x, 1);
  for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(same.data()[i] == x.data()[i]);
  Tensor img({1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  Tensor u = pixel_unshuffle(img, 2);
  CHECK(u.shape() == Shape{1, 4, 1, 1});
  for (int c = 0; c < 4; ++c) CHECK(u.data()[c] == c + 1);
  Tensor r = random_tensor({2, 3, 8, 8}, 5);
  Tensor back = pixel_shuffle(pixel_unshuffle(r, 2), 2);
  for (std::int64_t i = 0; i < r.numel(); ++i) CHECK(back.data()[i] == r.data()[i]);
  CHECK_THROWS_AS(pixel_unshuffle(Tensor({1, 1, 3, 4}), 2), ShapeError);
}

TEST_CASE("reflect padding and crop") {
  CHECK(reflect_index(-1, 4) == 1);
  CHECK(reflect_index(4, 4) == 2);
  CHECK(reflect_index(5, 4) == 1);
  Tensor x({1, 1, 1, 3}, std::vector<float>{1, 2, 3});
  Tensor p = reflect_pad_br(x, 0, 2);
  CHECK(p.shape() == Shape{1, 1, 1, 5});
  CHECK(p.data()[3] == 2);
  CHECK(p.data()[4] == 1);
  Tensor c = crop_tl(p, 1, 3);
  for (int i = 0; i < 3; ++i) CHECK(c.data()[i] == x.data()[i]);
}

TEST_CASE("permute and reshape") {
  Tensor x = random_tensor({2, 3, 4}, 6);
  Tensor p = permute(x, {2, 0, 1});
  CHECK(p.shape() == Shape{4, 2, 3});
  CHECK(p.at({3, 1, 2}) == x.at({1, 2, 3}));
  CHECK_THROWS_AS(reshape(x, {5, 5}), ShapeError);
}

TEST_CASE("gradient checks of primitives") {
  SUBCASE("elementwise") {
    Tensor a = random_tensor({3, 4}, 10), b = random_tensor({4}, 11);
    require_grads(check_gradients([&] { return add(a, b); }, {{"add.a", a}, {"add.b", b}}));
    require_grads(check_gradients([&] { return sub(a, b); }, {{"sub.a", a}, {"sub.b", b}}));
    require_grads(check_gradients([&] { return mul(a, b); }, {{"mul.a", a}, {"mul.b", b}}));
    require_grads(check_gradients([&] { return sigmoid(a); }, {{"sigmoid", a}}));
    require_grads(check_gradients([&] { return gelu(a); }, {{"gelu", a}}));
    require_grads(check_gradients([&] { return scale(a, -1.5f); }, {{"scale", a}}));
    Tensor r = random_tensor({3, 4}, 12, 0.1f, 1.0f);
    Tensor sign = random_tensor({3, 4}, 13);
    Tensor away = mul(r, Tensor({3, 4}, 1.0f));
    for (std::size_t i = 0; i < sign.data().size(); ++i) {
      away.mutable_data()[i] = sign.data()[i] < 0 ? -r.data()[i] : r.data()[i];
    }
    require_grads(check_gradients([&] { return relu(away); }, {{"relu", away}}));
  }
  SUBCASE("matmul and linear") {
    Tensor a = random_tensor({4, 5}, 20), b = random_tensor({5, 3}, 21);
    require_grads(check_gradients([&] { return matmul(a, b); }, {{"matmul.a", a}, {"matmul.b", b}}));
    Tensor ba = random_tensor({2, 3, 4, 5}, 22), bb = random_tensor({3, 5, 2}, 23);
    require_grads(check_gradients([&] { return matmul(ba, bb); }, {{"bmm.a", ba}, {"bmm.b", bb}}));
    Tensor x = random_tensor({2, 3, 5}, 24), w = random_tensor({5, 4}, 25), bias = random_tensor({4}, 26);
    require_grads(check_gradients([&] { return linear(x, w, &bias); },
                                  {{"linear.x", x}, {"linear.w", w}, {"linear.b", bias}}));
  }
  SUBCASE("conv2d") {
    Tensor x = random_tensor({1, 2, 4, 4}, 30), w = random_tensor({3, 2, 3, 3}, 31), b = random_tensor({3}, 32);
    require_grads(check_gradients([&] { return conv2d(x, w, &b); }, {{"conv.x", x}, {"conv.w", w}, {"conv.b", b}}));
    require_grads(check_gradients([&] { return conv2d(x, w, &b, Padding::kValid); },
                                  {{"conv_valid.x", x}, {"conv_valid.w", w}}));
  }
  SUBCASE("normalization and reductions") {
    Tensor x = random_tensor({2, 3, 8}, 40), g = random_tensor({8}, 41), b = random_tensor({8}, 42);
    require_grads(check_gradients([&] { return layer_norm(x, g, b); }, {{"ln.x", x}, {"ln.g", g}, {"ln.b", b}}));
    require_grads(check_gradients([&] { return softmax_lastdim(x); }, {{"softmax", x}}));
    Tensor y = random_tensor({2, 3, 4, 4}, 43);
    require_grads(check_gradients([&] { return global_avg_pool(y); }, {{"gap", y}}));
    require_grads(check_gradients([&] { return mean_dim(x, 1); }, {{"mean_dim", x}}));
    require_grads(check_gradients([&] { return mean(x); }, {{"mean", x}}));
  }
  SUBCASE("permutations") {
    Tensor x = random_tensor({1, 2, 4, 6}, 50);
    require_grads(check_gradients([&] { return pixel_unshuffle(x, 2); }, {{"unshuffle", x}}));
    require_grads(check_gradients([&] { return pixel_shuffle(reshape(x, {1, 8, 2, 3}), 2); }, {{"shuffle", x}}));
    require_grads(check_gradients([&] { return permute(x, {0, 3, 1, 2}); }, {{"permute", x}}));
    require_grads(check_gradients([&] { return reflect_pad_br(x, 3, 2); }, {{"reflect_pad", x}}));
    require_grads(check_gradients([&] { return crop_tl(x, 3, 5); }, {{"crop", x}}));
  }
  SUBCASE("composite conv, layer norm, sum") {
    Tensor x = random_tensor({1, 2, 4, 4}, 60), w = random_tensor({4, 2, 3, 3}, 61);
    Tensor g = random_tensor({4}, 62), b({4}, 0.0f);
    require_grads(check_gradients(
        [&] { return sum(layer_norm(permute(conv2d(x, w), {0, 2, 3, 1}), g, b)); },
        {{"composite.x", x}, {"composite.w", w}}));
  }
}
