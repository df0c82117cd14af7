// Copyright 2026 The rstca Authors
// SPDX-License-Identifier: Apache-2.0

#include "rstca/data.hpp"

#include <algorithm>
#include <iostream>
#include <stdexcept>

#include "rstca/image_io.hpp"

namespace rstca {

Tensor mosaic_rggb(const Tensor& rgb) {
  const bool batched = rgb.rank() == 4;
  if ((rgb.rank() != 3 && !batched) || rgb.dim(-3) != 3) {
    throw ShapeError("mosaic_rggb expects [3,H,W] or [B,3,H,W], got " + to_string(rgb.shape()));
  }
  const auto h = rgb.dim(-2), w = rgb.dim(-1);
  if (h % 2 || w % 2) {
    throw ShapeError("mosaic_rggb needs even spatial dims, got " + to_string(rgb.shape()));
  }
  const auto b = batched ? rgb.dim(0) : 1;
  Tensor out(batched ? Shape{b, 1, h, w} : Shape{1, h, w});
  auto src = rgb.data();
  auto dst = out.mutable_data();
  for (std::int64_t n = 0; n < b; ++n) {
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x) {
        dst[(n * h + y) * w + x] = src[((n * 3 + bayer_channel(y, x)) * h + y) * w + x];
      }
    }
  }
  return out;
}

ImageSample make_sample(const Tensor& rgb, std::string source_path) {
  if (rgb.rank() != 3 || rgb.dim(0) != 3) {
    throw ShapeError("make_sample expects [3,H,W], got " + to_string(rgb.shape()));
  }
  const auto h = rgb.dim(1) / 2 * 2, w = rgb.dim(2) / 2 * 2;
  if (h == 0 || w == 0) throw ShapeError("image too small to mosaic: " + to_string(rgb.shape()));
  ImageSample s;
  s.rgb = (h == rgb.dim(1) && w == rgb.dim(2)) ? rgb : crop_tl_image(rgb, h, w);
  s.mosaic = mosaic_rggb(s.rgb);
  s.source_path = std::move(source_path);
  return s;
}

Tensor crop_tl_image(const Tensor& image, std::int64_t h, std::int64_t w) {
  const auto c = image.dim(0), ih = image.dim(1), iw = image.dim(2);
  Tensor out({c, h, w});
  auto src = image.data();
  auto dst = out.mutable_data();
  for (std::int64_t k = 0; k < c; ++k) {
    for (std::int64_t y = 0; y < h; ++y) {
      std::copy_n(src.begin() + (k * ih + y) * iw, w, dst.begin() + (k * h + y) * w);
    }
  }
  return out;
}

Tensor apply_augmentation(const Tensor& image, const AugmentationSpec& spec) {
  if (image.rank() != 3) throw ShapeError("augmentation expects [C,H,W], got " + to_string(image.shape()));
  const int turns = ((spec.quarter_turns % 4) + 4) % 4;
  const auto c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const bool swap = turns % 2 == 1;
  const auto oh = swap ? w : h, ow = swap ? h : w;
  Tensor out({c, oh, ow});
  auto src = image.data();
  auto dst = out.mutable_data();
  for (std::int64_t y = 0; y < oh; ++y) {
    for (std::int64_t x = 0; x < ow; ++x) {
      const auto xf = spec.hflip ? ow - 1 - x : x;
      // Source pixel of output (y, xf) for a counter-clockwise rotation.
      std::int64_t sy = y, sx = xf;
      switch (turns) {
        case 1: sy = xf; sx = w - 1 - y; break;
        case 2: sy = h - 1 - y; sx = w - 1 - xf; break;
        case 3: sy = h - 1 - xf; sx = y; break;
        default: break;
      }
      for (std::int64_t k = 0; k < c; ++k) dst[(k * oh + y) * ow + x] = src[(k * h + sy) * w + sx];
    }
  }
  return out;
}

ImageSample augment(const ImageSample& s, const AugmentationSpec& spec) {
  if (spec.is_identity()) return s;
  ImageSample out;
  out.rgb = apply_augmentation(s.rgb, spec);
  out.mosaic = mosaic_rggb(out.rgb);
  out.source_path = s.source_path;
  return out;
}

AugmentationSpec random_augmentation(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> turns(0, 3), flip(0, 1);
  AugmentationSpec a;
  a.quarter_turns = turns(rng);
  a.hflip = flip(rng) == 1;
  return a;
}

LoadReport load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw std::invalid_argument("dataset directory '" + dir.string() + "' does not exist");
  }
  LoadReport report;
  for (const auto& path : list_images(dir)) {
    try {
      report.samples.push_back(make_sample(read_rgb(path), path.string()));
    } catch (const std::exception& e) {
      report.skipped.push_back(path.string() + ": " + e.what());
    }
  }
  return report;
}

PatchBatch sample_patches(const Dataset& dataset, std::int64_t batch, std::int64_t patch,
                          std::mt19937_64& rng, bool augmentation) {
  if (batch < 1 || patch < 2 || patch % 2) {
    throw std::invalid_argument("sample_patches: batch must be >= 1 and patch even, got batch=" +
                                std::to_string(batch) + " patch=" + std::to_string(patch));
  }
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& rgb = dataset[i].rgb;
    if (rgb.dim(1) >= patch && rgb.dim(2) >= patch) {
      eligible.push_back(i);
    } else {
      std::cerr << "warning: skipping " << dataset[i].source_path << " (" << rgb.dim(1) << "x"
                << rgb.dim(2) << " < patch " << patch << ")\n";
    }
  }
  if (eligible.empty()) {
    throw std::invalid_argument("sample_patches: no image is at least " + std::to_string(patch) +
                                "x" + std::to_string(patch));
  }
  PatchBatch out{Tensor({batch, 1, patch, patch}), Tensor({batch, 3, patch, patch})};
  auto tgt = out.targets.mutable_data();
  const auto plane = patch * patch;
  std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
  for (std::int64_t n = 0; n < batch; ++n) {
    const Tensor& rgb = dataset[eligible[pick(rng)]].rgb;
    const auto h = rgb.dim(1), w = rgb.dim(2);
    std::uniform_int_distribution<std::int64_t> ry(0, (h - patch) / 2), rx(0, (w - patch) / 2);
    const auto y0 = 2 * ry(rng), x0 = 2 * rx(rng);
    Tensor crop({3, patch, patch});
    auto src = rgb.data();
    auto dst = crop.mutable_data();
    for (std::int64_t c = 0; c < 3; ++c) {
      for (std::int64_t y = 0; y < patch; ++y) {
        std::copy_n(src.begin() + (c * h + y0 + y) * w + x0, patch, dst.begin() + (c * patch + y) * patch);
      }
    }
    if (augmentation) crop = apply_augmentation(crop, random_augmentation(rng));
    std::copy(crop.data().begin(), crop.data().end(), tgt.begin() + n * 3 * plane);
  }
  out.mosaics = mosaic_rggb(out.targets);
  return out;
}

Tensor bilinear_demosaic(const Tensor& mosaic) {
  if (mosaic.rank() != 3 || mosaic.dim(0) != 1) {
    throw ShapeError("bilinear_demosaic expects [1,H,W], got " + to_string(mosaic.shape()));
  }
  const auto h = mosaic.dim(1), w = mosaic.dim(2);
  Tensor out({3, h, w});
  auto m = mosaic.data();
  auto d = out.mutable_data();
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      const int own = bayer_channel(y, x);
      double acc[3] = {0, 0, 0};
      int cnt[3] = {0, 0, 0};
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        for (std::int64_t dx = -1; dx <= 1; ++dx) {
          const auto yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          const int c = bayer_channel(yy, xx);
          acc[c] += m[yy * w + xx];
          ++cnt[c];
        }
      }
      for (int c = 0; c < 3; ++c) {
        const float v = c == own ? m[y * w + x] : cnt[c] ? static_cast<float>(acc[c] / cnt[c]) : 0.0f;
        d[(c * h + y) * w + x] = v;
      }
    }
  }
  return out;
}

}  // namespace rstca
