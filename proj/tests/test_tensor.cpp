// Copyright 2026 The rstca Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "rstca/gradcheck.hpp"
#include "rstca/ops.hpp"
#include "rstca/tensor.hpp"

using namespace rstca;

TEST_CASE("shape and data agree") {
  Tensor t({2, 3, 4});
  CHECK(t.numel() == 24);
  CHECK(t.data().size() == 24);
  CHECK(t.dim(-1) == 4);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
}

TEST_CASE("sum backward gives ones") {
  Tensor x({3}, std::vector<float>{1, -2, 5}, true);
  Tape tape;
  Tensor loss = sum(x);
  tape.backward(loss);
  for (float g : x.grad()) CHECK(g == 1.0f);
}

TEST_CASE("sum of squares backward gives 2x") {
  Tensor x({4}, std::vector<float>{1, -2, 0.5f, 3}, true);
  Tape tape;
  tape.backward(sum(mul(x, x)));
  for (std::size_t i = 0; i < 4; ++i) CHECK(x.grad()[i] == doctest::Approx(2 * x.data()[i]));
  CHECK(x.grad().size() == x.data().size());
}

TEST_CASE("backward visits each op once and cannot replay") {
  Tensor x({2}, std::vector<float>{1, 2}, true);
  Tape tape;
  Tensor y = mul(x, x);
  Tensor loss = sum(add(y, x));
  CHECK(tape.size() == 3);
  CHECK(tape.backward(loss) == 3);
  CHECK(tape.consumed());
  CHECK_THROWS_AS(tape.backward(loss), std::logic_error);
}

TEST_CASE("unused leaves get zero gradients") {
  Tensor x({2}, 1.0f, true), unused({3}, 2.0f, true);
  Tape tape;
  Tensor loss = sum(x);
  Tensor dead = mul(unused, unused);
  tape.backward(loss);
  REQUIRE(unused.has_grad());
  for (float g : unused.grad()) CHECK(g == 0.0f);
}

TEST_CASE("no tape means nothing is recorded") {
  Tensor x({2}, 1.0f, true);
  Tensor y = mul(x, x);
  CHECK_FALSE(y.requires_grad());
  Tape tape;
  {
    NoGradGuard guard;
    Tensor z = mul(x, x);
    CHECK_FALSE(z.requires_grad());
  }
  CHECK(tape.size() == 0);
}

TEST_CASE("gradients accumulate over fan-out") {
  Tensor x({1}, 3.0f, true);
  Tape tape;
  tape.backward(sum(add(mul(x, x), scale(x, 4.0f))));
  CHECK(x.grad()[0] == doctest::Approx(10.0f));
}

namespace {

double sum_double(const Tensor& t) {
  double s = 0.0;
  for (float v : t.data()) s += v;
  return s;
}

double sum_squares_double(const Tensor& t) {
  double s = 0.0;
  for (float v : t.data()) s += static_cast<double>(v) * v;
  return s;
}

}  // namespace

TEST_CASE("finite differences of sum are ones") {
  Tensor x({5}, std::vector<float>{0.1f, -3, 2, 7, 0});
  Tensor g = finite_diff_grad([&] { return sum_double(x); }, x, 1e-3);
  for (float v : g.data()) CHECK(std::abs(v - 1.0f) <= 1e-6);
  // Through float32 ops the scalar output is rounded to ulp(|f|), so the
  // estimate is only good to about ulp(|f|) / (2h).
  Tensor gf = finite_diff_grad([](const Tensor& t) { return sum(t); }, x, 1e-3);
  for (float v : gf.data()) CHECK(std::abs(v - 1.0f) <= 5e-4);
}

TEST_CASE("finite differences of sum of squares") {
  Tensor x({2}, std::vector<float>{1, 2});
  Tensor g = finite_diff_grad([&] { return sum_squares_double(x); }, x, 1e-3);
  CHECK(std::abs(g.data()[0] - 2.0f) < 1e-4);
  CHECK(std::abs(g.data()[1] - 4.0f) < 1e-4);
  Tensor gf = finite_diff_grad([](const Tensor& t) { return sum(mul(t, t)); }, x, 1e-3);
  CHECK(std::abs(gf.data()[0] - 2.0f) < 5e-4);
  CHECK(std::abs(gf.data()[1] - 4.0f) < 5e-4);
}

TEST_CASE("clone and detach") {
  Tensor x({2}, 1.0f, true);
  Tensor c = x.clone();
  c.mutable_data()[0] = 5;
  CHECK(x.data()[0] == 1.0f);
  Tensor d = x.detach();
  CHECK(d.data()[1] == 1.0f);
  CHECK(d.id() != x.id());
  CHECK_FALSE(d.requires_grad());
}
