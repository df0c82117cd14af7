// Copyright 2026 The rstca Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <stdexcept>
#include <vector>

#include "rstca/tensor.hpp"

namespace rstca {

struct ImageIoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Decodes an 8-bit image into RGB floats [3,H,W] in [0,1] (v / 255).
Tensor read_rgb(const std::filesystem::path& path);
/// Decodes a single-channel image into [1,H,W] in [0,1].
Tensor read_gray(const std::filesystem::path& path);
/// Writes [3,H,W] or [1,H,W] as 8-bit after clamping to [0,1] and rounding.
void write_image(const std::filesystem::path& path, const Tensor& image);

/// PNG, TIFF, BMP or JPEG by extension (case-insensitive).
bool is_image_file(const std::filesystem::path& path);
/// Image files directly inside `dir`, sorted by filename.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

/// Rounds every value to the nearest multiple of 1/255 after clamping.
Tensor quantize_8bit(const Tensor& image);

}  // namespace rstca
