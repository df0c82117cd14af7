// Copyright 2026 The rstca Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "rstca/data.hpp"
#include "rstca/evaluation.hpp"
#include "rstca/image_io.hpp"
#include "rstca/ops.hpp"
#include "synthetic.hpp"

using namespace rstca;
using rstca::testing::random_tensor;
using rstca::testing::synthetic_image;

namespace {

Tensor offset(const Tensor& t, float d) {
  Tensor out = t.clone();
  for (auto& v : out.mutable_data()) v += d;
  return out;
}

Tensor with_noise(const Tensor& t, float amplitude, std::uint64_t seed) {
  Tensor noise = random_tensor(t.shape(), seed);
  Tensor out = t.clone();
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    out.mutable_data()[i] = std::clamp(out.data()[i] + amplitude * noise.data()[i], 0.0f, 1.0f);
  }
  return out;
}

}  // namespace

TEST_CASE("cpsnr") {
  Tensor ref = Tensor({3, 8, 8}, 0.5f);
  CHECK(cpsnr(ref, ref) == kPsnrCap);
  CHECK(cpsnr(ref, ref, 60.0) == 60.0);
  CHECK(std::abs(cpsnr(ref, offset(ref, 1.0f / 255.0f)) - 48.1308) < 1e-3);

  Tensor half = ref.clone();
  for (std::int64_t i = 0; i < half.numel(); i += 2) half.mutable_data()[i] += 2.0f / 255.0f;
  // 10 log10(1 / ((2/255)^2 / 2)) = 45.1205
  CHECK(std::abs(cpsnr(ref, half) - 10.0 * std::log10(2.0 * 255.0 * 255.0 / 4.0)) < 1e-3);
  CHECK(std::abs(cpsnr(ref, half) - 45.1205) < 1e-3);
  CHECK(cpsnr(ref, offset(ref, 0.1f)) > 0.0);
  CHECK_THROWS(cpsnr(ref, Tensor({3, 8, 6})));
}

TEST_CASE("ssim") {
  Tensor a = synthetic_image(32, 32, 1);
  CHECK(std::abs(ssim(a, a) - 1.0) < 1e-9);

  SUBCASE("inverted checkerboard is negative") {
    Tensor board({3, 16, 16});
    for (std::int64_t c = 0; c < 3; ++c) {
      for (std::int64_t y = 0; y < 16; ++y) {
        for (std::int64_t x = 0; x < 16; ++x) board.mutable_data()[(c * 16 + y) * 16 + x] = ((x + y) % 2) ? 1.0f : 0.0f;
      }
    }
    Tensor inverted = board.clone();
    for (auto& v : inverted.mutable_data()) v = 1.0f - v;
    CHECK(ssim(board, inverted) < 0.0);
    CHECK(ssim(board, inverted) >= -1.0);
  }
  SUBCASE("symmetric") {
    for (std::uint64_t s = 0; s < 5; ++s) {
      Tensor x = random_tensor({3, 16, 20}, s, 0.0f, 1.0f);
      Tensor y = random_tensor({3, 16, 20}, s + 100, 0.0f, 1.0f);
      CHECK(ssim(x, y) == ssim(y, x));
    }
  }
  SUBCASE("falls with noise amplitude") {
    double prev_ssim = 1.0, prev_psnr = kPsnrCap;
    for (float amp : {0.01f, 0.03f, 0.1f, 0.3f}) {
      Tensor noisy = with_noise(a, amp, 7);
      const double s = ssim(a, noisy), p = cpsnr(a, noisy);
      CHECK(s < prev_ssim);
      CHECK(p < prev_psnr);
      prev_ssim = s;
      prev_psnr = p;
    }
  }
  CHECK_THROWS(ssim(Tensor({3, 10, 16}), Tensor({3, 10, 16})));
}

TEST_CASE("scoring options") {
  Tensor ref = synthetic_image(24, 24, 2);
  Tensor out = with_noise(ref, 0.05f, 3);
  MetricRow full = score_image("a", ref, out);
  MetricRow cropped = score_image("a", ref, out, {4, false, false});
  CHECK(full.cpsnr_db != cropped.cpsnr_db);
  MetricRow quant = score_image("a", ref, out, {0, true, false});
  CHECK(quant.cpsnr_db == doctest::Approx(cpsnr(ref, quantize_8bit(out))));
  CHECK(format_metric(48.13079) == "48.1308");
}

TEST_CASE("dataset evaluation") {
  const auto dir = rstca::testing::fresh_temp_dir("rstca_eval_test");
  rstca::testing::write_synthetic_dataset(dir, 2, 24, 32, 5);

  SUBCASE("self test") {
    MetricReport r = evaluate_dataset(bilinear_demosaic, dir, {0, false, true}, "gt");
    REQUIRE(r.rows.size() == 2);
    CHECK(r.mean_cpsnr == kPsnrCap);
    CHECK(r.mean_ssim == 1.0);
  }
  SUBCASE("bilinear report round trip") {
    std::ofstream(dir / "bad.png") << "garbage";
    MetricReport r = evaluate_dataset(bilinear_demosaic, dir, {}, "bilinear");
    REQUIRE(r.rows.size() == 2);
    CHECK(r.skipped.size() == 1);
    CHECK(r.rows[0].image == "img0.png");
    CHECK(r.rows[1].image == "img1.png");
    CHECK(r.mean_cpsnr == doctest::Approx((r.rows[0].cpsnr_db + r.rows[1].cpsnr_db) / 2));
    for (const auto& row : r.rows) {
      CHECK(row.cpsnr_db > 10.0);
      CHECK(row.cpsnr_db < kPsnrCap);
    }

    std::ostringstream text;
    write_report_csv(text, r);
    std::istringstream lines(text.str());
    std::string line;
    std::vector<std::string> all;
    while (std::getline(lines, line)) all.push_back(line);
    REQUIRE(all.size() == 4);
    CHECK(all[0] == "image,cpsnr_db,ssim");
    CHECK(all[1].rfind("img0.png,", 0) == 0);
    CHECK(all[3].rfind("MEAN,", 0) == 0);

    write_report_csv(dir / "report.csv", r);
    MetricReport back = read_report_csv(dir / "report.csv");
    REQUIRE(back.rows.size() == 2);
    double sum_p = 0.0, sum_s = 0.0;
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(back.rows[i].image == r.rows[i].image);
      CHECK(format_metric(back.rows[i].cpsnr_db) == format_metric(r.rows[i].cpsnr_db));
      sum_p += back.rows[i].cpsnr_db;
      sum_s += back.rows[i].ssim;
    }
    CHECK(format_metric(sum_p / 2) == format_metric(back.mean_cpsnr));
    CHECK(format_metric(sum_s / 2) == format_metric(back.mean_ssim));
  }
  std::filesystem::remove_all(dir);
}
