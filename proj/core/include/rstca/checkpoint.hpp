// Copyright 2026 The rstca Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>

#include "rstca/model.hpp"
#include "rstca/training.hpp"

namespace rstca {

/// A checkpoint that does not fit the architecture it is loaded into.
struct CheckpointMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed or truncated checkpoint file.
struct CheckpointFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  ModelConfig config;
  std::int64_t iteration = 0;
  std::uint64_t seed = 0;
  NamedTensors params;
  AdamState adam;  // empty m/v when the file carries no optimizer state
};

/// Text header of key=value lines, a manifest of "name shape" lines, then the
/// parameters and the Adam moments as little-endian float32 in manifest order.
/// Written to a temporary file and renamed, so a crash never leaves a torn file.
void save_checkpoint(const std::filesystem::path& path, const TrainState& state);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies `params` into `net`. Throws CheckpointMismatch naming the first
/// parameter whose name or shape differs.
void load_parameters(RstcaNet& net, const NamedTensors& params);

/// Rebuilds the network from the stored config and restores parameters,
/// optimizer moments, iteration and seed.
TrainState load_train_state(const std::filesystem::path& path);

}  // namespace rstca
