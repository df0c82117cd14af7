// Copyright 2026 The rstca Authors
// SPDX-License-Identifier: Apache-2.0

#include "rstca/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace rstca {

namespace {

cv::Mat decode(const std::filesystem::path& path, int flags) {
  cv::Mat m = cv::imread(path.string(), flags);
  if (m.empty()) throw ImageIoError("cannot decode image '" + path.string() + "'");
  if (m.depth() != CV_8U) {
    throw ImageIoError("image '" + path.string() + "' is not 8-bit");
  }
  return m;
}

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace

Tensor read_rgb(const std::filesystem::path& path) {
  cv::Mat bgr = decode(path, cv::IMREAD_COLOR);
  const std::int64_t h = bgr.rows, w = bgr.cols;
  Tensor out({3, h, w});
  auto d = out.mutable_data();
  for (std::int64_t y = 0; y < h; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(static_cast<int>(y));
    for (std::int64_t x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) d[(c * h + y) * w + x] = row[x][2 - c] / 255.0f;
    }
  }
  return out;
}

Tensor read_gray(const std::filesystem::path& path) {
  cv::Mat g = decode(path, cv::IMREAD_GRAYSCALE);
  const std::int64_t h = g.rows, w = g.cols;
  Tensor out({1, h, w});
  auto d = out.mutable_data();
  for (std::int64_t y = 0; y < h; ++y) {
    const auto* row = g.ptr<std::uint8_t>(static_cast<int>(y));
    for (std::int64_t x = 0; x < w; ++x) d[y * w + x] = row[x] / 255.0f;
  }
  return out;
}

void write_image(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3 || (image.dim(0) != 3 && image.dim(0) != 1)) {
    throw ShapeError("write_image expects [3,H,W] or [1,H,W], got " + to_string(image.shape()));
  }
  const auto c = image.dim(0), h = image.dim(1), w = image.dim(2);
  auto d = image.data();
  cv::Mat m(static_cast<int>(h), static_cast<int>(w), c == 3 ? CV_8UC3 : CV_8UC1);
  for (std::int64_t y = 0; y < h; ++y) {
    auto* row = m.ptr<std::uint8_t>(static_cast<int>(y));
    for (std::int64_t x = 0; x < w; ++x) {
      if (c == 3) {
        for (int k = 0; k < 3; ++k) row[x * 3 + k] = to_byte(d[((2 - k) * h + y) * w + x]);
      } else {
        row[x] = to_byte(d[y * w + x]);
      }
    }
  }
  if (!cv::imwrite(path.string(), m)) throw ImageIoError("cannot write image '" + path.string() + "'");
}

bool is_image_file(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return ext == ".png" || ext == ".tif" || ext == ".tiff" || ext == ".bmp" || ext == ".jpg" ||
         ext == ".jpeg";
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.filename() < b.filename(); });
  return out;
}

Tensor quantize_8bit(const Tensor& image) {
  Tensor out = image.clone();
  for (auto& v : out.mutable_data()) v = to_byte(v) / 255.0f;
  return out;
}

}  // namespace rstca
