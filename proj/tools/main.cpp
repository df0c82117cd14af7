// Copyright 2026 The rstca Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

int main(int argc, char** argv) {
  return rstca::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
