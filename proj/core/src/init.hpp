// Copyright 2026 The rstca Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <random>

#include "rstca/tensor.hpp"

namespace rstca::detail {

// Normal(0, std) resampled until it falls within two standard deviations.
inline Tensor trunc_normal(Shape shape, float stddev, std::mt19937_64& rng) {
  Tensor t(std::move(shape), 0.0f, true);
  std::normal_distribution<float> dist(0.0f, stddev);
  for (auto& v : t.mutable_data()) {
    float s;
    do {
      s = dist(rng);
    } while (std::fabs(s) > 2.0f * stddev);
    v = s;
  }
  return t;
}

// Uniform with variance 1/fan_in.
inline Tensor fan_in_uniform(Shape shape, std::int64_t fan_in, std::mt19937_64& rng) {
  Tensor t(std::move(shape), 0.0f, true);
  const float bound = std::sqrt(3.0f / static_cast<float>(fan_in));
  std::uniform_real_distribution<float> dist(-bound, bound);
  for (auto& v : t.mutable_data()) v = dist(rng);
  return t;
}

inline Tensor param_zeros(Shape shape) { return Tensor(std::move(shape), 0.0f, true); }
inline Tensor param_ones(Shape shape) { return Tensor(std::move(shape), 1.0f, true); }

}  // namespace rstca::detail
