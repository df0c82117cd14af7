// Copyright 2026 The rstca Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "rstca/data.hpp"
#include "rstca/model.hpp"
#include "rstca/tensor.hpp"

namespace rstca {

/// Raised when a loss or gradient stops being finite.
struct NumericalFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

/// Mean absolute difference; the subgradient at zero is zero.
Tensor l1_loss(const Tensor& pred, const Tensor& target);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // L2 term added to the gradient; off by default
};

struct AdamState {
  AdamConfig config;
  std::vector<Tensor> m, v;  // mirror the parameter list
  std::int64_t t = 0;

  static AdamState init(const NamedTensors& params, AdamConfig config = {});
};

/// One bias-corrected Adam update from the parameters' gradient buffers.
/// Parameters without a gradient are treated as having a zero gradient.
/// Throws NumericalFailure naming the first parameter with a non-finite gradient.
void adam_step(AdamState& state, const NamedTensors& params, double lr);

/// Scales all gradients so their global L2 norm is at most `max_norm`.
void clip_grad_norm(const NamedTensors& params, double max_norm);

struct LrSchedule {
  double base = 1e-4;
  std::int64_t period = 40000;  // halving period in iterations

  /// Halving period of a preset: 40k for B and tiny, 100k for S, 200k for L.
  static LrSchedule for_variant(const std::string& name);
};

/// base * 0.5^floor(iter / period).
double lr_at(const LrSchedule& schedule, std::int64_t iter);

struct TrainConfig {
  std::int64_t iterations = 1000;  // total, counted from iteration 0
  std::int64_t batch = 16;
  std::int64_t patch = 64;
  bool augment = true;
  LrSchedule schedule;
  double clip_norm = 0.0;  // 0 disables clipping
  std::int64_t checkpoint_every = 0;  // 0 saves only at the end
  std::filesystem::path checkpoint_path;  // empty disables checkpointing
};

struct TrainState {
  RstcaNet net;
  AdamState adam;
  std::int64_t iteration = 0;  // completed iterations
  std::uint64_t seed = 0;

  static TrainState init(const ModelConfig& cfg, std::uint64_t seed, AdamConfig adam = {});
};

struct TrainRecord {
  std::int64_t iteration;
  double lr;
  float loss;
};

/// Random stream of one iteration, a pure function of (seed, iteration), so a
/// resumed run draws the same batches as an uninterrupted one.
std::mt19937_64 iteration_rng(std::uint64_t seed, std::int64_t iteration);

/// Forward, L1 loss, backward and Adam update on one batch. Returns the loss
/// before the update. Throws NumericalFailure, leaving parameters untouched,
/// when the loss is not finite.
float train_step(TrainState& state, const PatchBatch& batch, double lr, double clip_norm = 0.0);

/// L1 loss of the current parameters on `batch`, without a tape.
float evaluate_loss(const RstcaNet& net, const PatchBatch& batch);

/// Trains from state.iteration up to cfg.iterations on random patches of
/// `dataset`. Each record is passed to `on_step`. Checkpoints are written
/// every cfg.checkpoint_every iterations and at the end; on a non-finite loss
/// the last checkpoint on disk is left untouched and NumericalFailure escapes.
std::vector<TrainRecord> train(TrainState& state, const Dataset& dataset, const TrainConfig& cfg,
                               const std::function<void(const TrainRecord&)>& on_step = {});

/// "iteration,lr,loss" header.
void write_loss_header(std::ostream& out);
void write_loss_row(std::ostream& out, const TrainRecord& r);

}  // namespace rstca
