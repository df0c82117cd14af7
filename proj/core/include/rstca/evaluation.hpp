// Copyright 2026 The rstca Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "rstca/tensor.hpp"

namespace rstca {

inline constexpr double kPsnrCap = 100.0;

/// Colour PSNR: 10 log10(1 / MSE) with the MSE pooled over all three channels.
/// Returns `cap` for identical images.
double cpsnr(const Tensor& ref, const Tensor& test, double cap = kPsnrCap);

/// Mean over channels of SSIM with an 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, L = 1, evaluated at every fully covered position.
double ssim(const Tensor& ref, const Tensor& test);

struct MetricRow {
  std::string image;
  double cpsnr_db;
  double ssim;
};

struct MetricReport {
  std::string method;
  std::string dataset;
  std::vector<MetricRow> rows;
  std::vector<std::string> skipped;
  double mean_cpsnr = 0.0;
  double mean_ssim = 0.0;
};

/// mosaic [1,H,W] -> RGB [3,H,W].
using Demosaicer = std::function<Tensor(const Tensor&)>;

struct EvalOptions {
  std::int64_t crop = 0;     // border pixels dropped before metrics
  bool quantize = false;     // round outputs to 8 bit first
  bool self_test = false;    // compare the ground truth with itself
};

/// Mosaics each image of `dir` (filename order), demosaics, clamps to [0,1] and
/// scores. Unreadable images are recorded in `skipped`.
MetricReport evaluate_dataset(const Demosaicer& method, const std::filesystem::path& dir,
                              const EvalOptions& options = {}, std::string method_label = {});

/// Scores a single pair after the clamp/crop/quantize policy of `options`.
MetricRow score_image(const std::string& name, const Tensor& ref, const Tensor& out,
                      const EvalOptions& options = {});

/// Value as written to the CSV (4 decimals).
std::string format_metric(double v);

/// Header `image,cpsnr_db,ssim`, one row per image, then `MEAN,<v>,<v>`. The
/// MEAN row is the average of the rounded per-image values as printed.
void write_report_csv(std::ostream& out, const MetricReport& report);
void write_report_csv(const std::filesystem::path& path, const MetricReport& report);

/// Parses a report CSV back; the MEAN row fills the means.
MetricReport read_report_csv(const std::filesystem::path& path);

}  // namespace rstca
