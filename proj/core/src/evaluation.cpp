// Copyright 2026 The rstca Authors
// SPDX-License-Identifier: Apache-2.0

#include "rstca/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "rstca/data.hpp"
#include "rstca/image_io.hpp"

namespace rstca {

namespace {

void check_pair(const Tensor& ref, const Tensor& test, const char* what) {
  if (ref.shape() != test.shape()) {
    throw ShapeError(std::string(what) + ": " + to_string(ref.shape()) + " vs " + to_string(test.shape()));
  }
  if (ref.rank() != 3) throw ShapeError(std::string(what) + " expects [C,H,W], got " + to_string(ref.shape()));
}

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> g(size);
  double total = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - (size - 1) / 2.0;
    g[i] = std::exp(-d * d / (2 * sigma * sigma));
    total += g[i];
  }
  for (auto& v : g) v /= total;
  return g;
}

// Valid-mode separable filtering of one plane.
std::vector<double> filter_valid(const std::vector<double>& x, std::int64_t h, std::int64_t w,
                                 const std::vector<double>& g) {
  const auto k = static_cast<std::int64_t>(g.size());
  const auto oh = h - k + 1, ow = w - k + 1;
  std::vector<double> tmp(h * ow), out(oh * ow);
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x0 = 0; x0 < ow; ++x0) {
      double s = 0.0;
      for (std::int64_t i = 0; i < k; ++i) s += g[i] * x[y * w + x0 + i];
      tmp[y * ow + x0] = s;
    }
  }
  for (std::int64_t y0 = 0; y0 < oh; ++y0) {
    for (std::int64_t x0 = 0; x0 < ow; ++x0) {
      double s = 0.0;
      for (std::int64_t i = 0; i < k; ++i) s += g[i] * tmp[(y0 + i) * ow + x0];
      out[y0 * ow + x0] = s;
    }
  }
  return out;
}

Tensor crop_border(const Tensor& img, std::int64_t c) {
  if (c == 0) return img;
  const auto ch = img.dim(0), h = img.dim(1), w = img.dim(2);
  if (2 * c >= h || 2 * c >= w) throw ShapeError("crop of " + std::to_string(c) + " empties " + to_string(img.shape()));
  Tensor out({ch, h - 2 * c, w - 2 * c});
  auto s = img.data();
  auto d = out.mutable_data();
  const auto oh = h - 2 * c, ow = w - 2 * c;
  for (std::int64_t k = 0; k < ch; ++k) {
    for (std::int64_t y = 0; y < oh; ++y) {
      for (std::int64_t x = 0; x < ow; ++x) d[(k * oh + y) * ow + x] = s[(k * h + y + c) * w + x + c];
    }
  }
  return out;
}

Tensor clamp01(const Tensor& t) {
  Tensor out = t.clone();
  for (auto& v : out.mutable_data()) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

double round4(double v) { return std::stod(format_metric(v)); }

}  // namespace

double cpsnr(const Tensor& ref, const Tensor& test, double cap) {
  check_pair(ref, test, "cpsnr");
  auto a = ref.data();
  auto b = test.data();
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    se += d * d;
  }
  if (se == 0.0) return cap;
  const double mse = se / static_cast<double>(a.size());
  return std::min(cap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Tensor& ref, const Tensor& test) {
  check_pair(ref, test, "ssim");
  constexpr int kWin = 11;
  const auto ch = ref.dim(0), h = ref.dim(1), w = ref.dim(2);
  if (h < kWin || w < kWin) {
    throw ShapeError("ssim needs images of at least 11x11, got " + to_string(ref.shape()));
  }
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const auto g = gaussian_window(kWin, 1.5);
  auto a = ref.data();
  auto b = test.data();
  const auto plane = h * w;
  double total = 0.0;
  for (std::int64_t k = 0; k < ch; ++k) {
    std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);
    for (std::int64_t i = 0; i < plane; ++i) {
      x[i] = a[k * plane + i];
      y[i] = b[k * plane + i];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, h, w, g), my = filter_valid(y, h, w, g);
    const auto sxx = filter_valid(xx, h, w, g), syy = filter_valid(yy, h, w, g), sxy = filter_valid(xy, h, w, g);
    double acc = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i];
      const double cov = sxy[i] - mx[i] * my[i];
      acc += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += acc / static_cast<double>(mx.size());
  }
  return total / static_cast<double>(ch);
}

MetricRow score_image(const std::string& name, const Tensor& ref, const Tensor& out,
                      const EvalOptions& options) {
  Tensor test = clamp01(out);
  if (options.quantize) test = quantize_8bit(test);
  const Tensor r = crop_border(ref, options.crop);
  test = crop_border(test, options.crop);
  return {name, cpsnr(r, test), ssim(r, test)};
}

MetricReport evaluate_dataset(const Demosaicer& method, const std::filesystem::path& dir,
                              const EvalOptions& options, std::string method_label) {
  if (!std::filesystem::is_directory(dir)) {
    throw std::invalid_argument("dataset directory '" + dir.string() + "' does not exist");
  }
  MetricReport report;
  report.method = std::move(method_label);
  report.dataset = dir.filename().string();
  for (const auto& path : list_images(dir)) {
    try {
      const ImageSample s = make_sample(read_rgb(path), path.string());
      const Tensor out = options.self_test ? s.rgb : method(s.mosaic);
      report.rows.push_back(score_image(path.filename().string(), s.rgb, out, options));
    } catch (const std::exception& e) {
      report.skipped.push_back(path.string() + ": " + e.what());
    }
  }
  double sp = 0.0, ss = 0.0;
  for (const auto& r : report.rows) {
    sp += r.cpsnr_db;
    ss += r.ssim;
  }
  if (!report.rows.empty()) {
    report.mean_cpsnr = sp / static_cast<double>(report.rows.size());
    report.mean_ssim = ss / static_cast<double>(report.rows.size());
  }
  return report;
}

std::string format_metric(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

void write_report_csv(std::ostream& out, const MetricReport& report) {
  out << "image,cpsnr_db,ssim\n";
  double sp = 0.0, ss = 0.0;
  for (const auto& r : report.rows) {
    out << r.image << ',' << format_metric(r.cpsnr_db) << ',' << format_metric(r.ssim) << '\n';
    sp += round4(r.cpsnr_db);
    ss += round4(r.ssim);
  }
  const double n = report.rows.empty() ? 1.0 : static_cast<double>(report.rows.size());
  out << "MEAN," << format_metric(sp / n) << ',' << format_metric(ss / n) << '\n';
}

void write_report_csv(const std::filesystem::path& path, const MetricReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report '" + path.string() + "'");
  write_report_csv(out, report);
}

MetricReport read_report_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read report '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != "image,cpsnr_db,ssim") {
    throw std::runtime_error("report '" + path.string() + "' has an unexpected header");
  }
  MetricReport report;
  bool saw_mean = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c2 = line.rfind(','), c1 = line.rfind(',', c2 - 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw std::runtime_error("malformed report row '" + line + "'");
    }
    MetricRow r{line.substr(0, c1), std::stod(line.substr(c1 + 1, c2 - c1 - 1)), std::stod(line.substr(c2 + 1))};
    if (r.image == "MEAN") {
      report.mean_cpsnr = r.cpsnr_db;
      report.mean_ssim = r.ssim;
      saw_mean = true;
    } else {
      report.rows.push_back(std::move(r));
    }
  }
  if (!saw_mean) throw std::runtime_error("report '" + path.string() + "' has no MEAN row");
  return report;
}

}  // namespace rstca
