// Copyright 2026 The rstca Authors
// SPDX-License-Identifier: Apache-2.0

#include "rstca/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "rstca/ops.hpp"

namespace rstca {

Tensor finite_diff_grad(const std::function<double()>& f, Tensor& x, double h) {
  Tensor g(x.shape());
  auto xd = x.mutable_data();
  auto gd = g.mutable_data();
  for (std::size_t i = 0; i < xd.size(); ++i) {
    const float orig = xd[i];
    const float plus = static_cast<float>(orig + h);
    const float minus = static_cast<float>(orig - h);
    xd[i] = plus;
    const double fp = f();
    xd[i] = minus;
    const double fm = f();
    xd[i] = orig;
    gd[i] = static_cast<float>((fp - fm) / (static_cast<double>(plus) - minus));
  }
  return g;
}

Tensor finite_diff_grad(const std::function<Tensor(const Tensor&)>& f, Tensor& x, double h) {
  return finite_diff_grad(
      [&]() -> double {
        const Tensor y = f(x);
        if (y.numel() != 1) throw ShapeError("finite_diff_grad needs a scalar-valued function");
        return y.item();
      },
      x, h);
}

double max_relative_error(const Tensor& analytic, const Tensor& numeric, double floor) {
  if (analytic.shape() != numeric.shape()) {
    throw ShapeError("max_relative_error: " + to_string(analytic.shape()) + " vs " +
                     to_string(numeric.shape()));
  }
  auto a = analytic.data();
  auto n = numeric.data();
  double num = 0.0, den = floor;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::fabs(static_cast<double>(a[i]) - n[i]));
    den = std::max({den, std::fabs(static_cast<double>(a[i])), std::fabs(static_cast<double>(n[i]))});
  }
  return num / den;
}

double max_elementwise_relative_error(const Tensor& analytic, const Tensor& numeric,
                                      double floor) {
  if (analytic.shape() != numeric.shape()) {
    throw ShapeError("max_elementwise_relative_error: " + to_string(analytic.shape()) + " vs " +
                     to_string(numeric.shape()));
  }
  auto a = analytic.data();
  auto n = numeric.data();
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::fabs(static_cast<double>(a[i])),
                                   std::fabs(static_cast<double>(n[i])), floor});
    worst = std::max(worst, std::fabs(static_cast<double>(a[i]) - n[i]) / denom);
  }
  return worst;
}

std::vector<GradCheckResult> check_gradients(const std::function<Tensor()>& forward,
                                             std::vector<std::pair<std::string, Tensor>> wrt,
                                             unsigned seed, double h, double floor) {
  Tensor probe = forward();
  Tensor weights(probe.shape());
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  for (auto& v : weights.mutable_data()) v = dist(rng);

  for (auto& [name, t] : wrt) {
    t.set_requires_grad(true);
    t.clear_grad();
  }
  {
    Tape tape;
    tape.backward(sum(mul(forward(), weights)));
  }
  auto projected = [&]() -> double {
    const Tensor y = forward();
    auto yd = y.data();
    auto wd = weights.data();
    double s = 0.0;
    for (std::size_t i = 0; i < yd.size(); ++i) s += static_cast<double>(yd[i]) * wd[i];
    return s;
  };
  std::vector<GradCheckResult> out;
  for (auto& [name, t] : wrt) {
    // No gradient recorded means the output does not depend on t.
    Tensor analytic = t.has_grad() ? Tensor(t.shape(), std::vector<float>(t.grad().begin(), t.grad().end()))
                                   : Tensor(t.shape());
    Tensor numeric = finite_diff_grad(projected, t, h);
    out.push_back({name, max_relative_error(analytic, numeric, floor),
                   max_elementwise_relative_error(analytic, numeric, floor)});
  }
  return out;
}

}  // namespace rstca
