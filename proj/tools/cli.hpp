// Copyright 2026 The rstca Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

namespace rstca::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kCheckpointMismatch = 3,
  kNumericalFailure = 4,
};

/// Runs the rstca command line; `args` excludes the program name.
int run(const std::vector<std::string>& args);

}  // namespace rstca::cli
