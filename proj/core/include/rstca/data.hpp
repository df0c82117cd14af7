// Copyright 2026 The rstca Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "rstca/tensor.hpp"

namespace rstca {

/// A ground-truth RGB image and its RGGB mosaic.
struct ImageSample {
  Tensor rgb;     // [3,H,W] in [0,1], H and W even
  Tensor mosaic;  // [1,H,W]
  std::string source_path;
};

/// Geometric augmentation applied to RGB before mosaicing.
struct AugmentationSpec {
  int quarter_turns = 0;  // counter-clockwise, 0..3
  bool hflip = false;     // applied after the rotation

  bool is_identity() const { return quarter_turns % 4 == 0 && !hflip; }
};

struct PatchBatch {
  Tensor mosaics;  // [B,1,P,P]
  Tensor targets;  // [B,3,P,P]
};

using Dataset = std::vector<ImageSample>;

/// RGGB sampling: (0,0) R, (0,1) G, (1,0) G, (1,1) B in every 2x2 cell.
/// Accepts [3,H,W] or batched [B,3,H,W]; H and W must be even.
Tensor mosaic_rggb(const Tensor& rgb);
/// Channel sampled at (y, x): 0 R, 1 G, 2 B.
inline int bayer_channel(std::int64_t y, std::int64_t x) {
  return static_cast<int>((y & 1) + (x & 1));
}

/// Wraps an RGB image, cropping the last row/column when odd.
ImageSample make_sample(const Tensor& rgb, std::string source_path = {});

/// Top-left crop of [C,H,W].
Tensor crop_tl_image(const Tensor& image, std::int64_t h, std::int64_t w);

/// Rotation then flip of [3,H,W] (or [C,H,W]).
Tensor apply_augmentation(const Tensor& image, const AugmentationSpec& spec);
ImageSample augment(const ImageSample& s, const AugmentationSpec& spec);
AugmentationSpec random_augmentation(std::mt19937_64& rng);

struct LoadReport {
  Dataset samples;
  std::vector<std::string> skipped;  // "path: reason"
};

/// Loads every image in `dir` sorted by filename; unreadable files are skipped.
LoadReport load_dataset(const std::filesystem::path& dir);

/// Draws `batch` patches of `patch`x`patch` at even-aligned corners, optionally
/// augmented. Images smaller than the patch are skipped with a warning on stderr.
/// Throws std::invalid_argument when no image is large enough.
PatchBatch sample_patches(const Dataset& dataset, std::int64_t batch, std::int64_t patch,
                          std::mt19937_64& rng, bool augmentation = true);

/// Bilinear interpolation of an RGGB mosaic [1,H,W] -> [3,H,W]: each missing
/// value is the mean of the same-channel sites in its 3x3 neighbourhood that
/// lie inside the image.
Tensor bilinear_demosaic(const Tensor& mosaic);

}  // namespace rstca
