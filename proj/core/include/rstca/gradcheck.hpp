// Copyright 2026 The rstca Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rstca/tensor.hpp"

namespace rstca {

/// Central-difference estimate of d f / d x. `x` is perturbed in place and
/// restored; f runs without an active tape. The step actually applied is the
/// float32-representable difference (x+h) - (x-h), not 2h.
Tensor finite_diff_grad(const std::function<Tensor(const Tensor&)>& f, Tensor& x,
                        double h = 1e-3);

/// Same estimate for a scalar function that reads `x` through a closure.
Tensor finite_diff_grad(const std::function<double()>& f, Tensor& x, double h = 1e-3);

/// max_i |a_i - n_i| / max(max_i |a_i|, max_i |n_i|, floor): error relative to
/// the gradient's own scale. This is the metric the gradient suite gates on.
double max_relative_error(const Tensor& analytic, const Tensor& numeric, double floor = 1e-4);

/// max_i |a_i - n_i| / max(|a_i|, |n_i|, floor). At float32 with h=1e-3 this is
/// dominated by output rounding on near-zero components; reported, not gated.
double max_elementwise_relative_error(const Tensor& analytic, const Tensor& numeric,
                                      double floor = 1e-4);

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  double max_elementwise_rel_error = 0.0;
};

/// Checks d<w, forward()>/d t for every t in `wrt`, where w is a fixed random
/// projection in [-1,1] drawn from `seed`. The analytic side backpropagates
/// sum(w * y) through the tape; the numeric side evaluates the same projection
/// in double precision under central differences.
std::vector<GradCheckResult> check_gradients(const std::function<Tensor()>& forward,
                                             std::vector<std::pair<std::string, Tensor>> wrt,
                                             unsigned seed = 0, double h = 1e-3,
                                             double floor = 1e-4);

}  // namespace rstca
