// Copyright 2026 The rstca Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "rstca/checkpoint.hpp"
#include "rstca/gradcheck.hpp"
#include "rstca/ops.hpp"
#include "rstca/training.hpp"
#include "synthetic.hpp"

using namespace rstca;
using rstca::testing::random_tensor;
using rstca::testing::values;

namespace {

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

Dataset small_dataset() {
  Dataset ds;
  for (std::uint64_t i = 0; i < 3; ++i) ds.push_back(make_sample(rstca::testing::synthetic_image(32, 32, 40 + i)));
  return ds;
}

TrainConfig small_train(std::int64_t iterations) {
  TrainConfig cfg;
  cfg.iterations = iterations;
  cfg.batch = 2;
  cfg.patch = 16;
  return cfg;
}

}  // namespace

TEST_CASE("l1 loss") {
  Tensor a = random_tensor({2, 3, 4}, 1);
  CHECK(l1_loss(a, a).item() == 0.0f);
  CHECK(l1_loss(add(a, Tensor({1}, 0.25f)), a).item() == doctest::Approx(0.25f));
  CHECK(l1_loss(a, add(a, Tensor({1}, 0.25f))).item() == doctest::Approx(0.25f));
  CHECK_THROWS(l1_loss(a, Tensor({2, 3, 5})));

  SUBCASE("gradient is sign over count") {
    Tensor pred = random_tensor({2, 3, 4}, 2);
    Tensor target = random_tensor({2, 3, 4}, 3);
    pred.set_requires_grad(true);
    {
      Tape tape;
      tape.backward(l1_loss(pred, target));
    }
    const auto g = values(Tensor(pred.shape(), std::vector<float>(pred.grad().begin(), pred.grad().end())));
    const auto p = values(pred), t = values(target);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == (p[i] > t[i] ? 1.0f : -1.0f) / 24.0f);
    Tensor numeric = finite_diff_grad([&](const Tensor& x) { return l1_loss(x, target); }, pred);
    CHECK(max_relative_error(Tensor(pred.shape(), g), numeric) < 1e-3);
  }
  SUBCASE("zero subgradient at ties") {
    Tensor pred({4}, 0.5f, true);
    {
      Tape tape;
      tape.backward(l1_loss(pred, Tensor({4}, 0.5f)));
    }
    for (float g : pred.grad()) CHECK(g == 0.0f);
  }
}

TEST_CASE("adam") {
  SUBCASE("scalar oracle, two steps") {
    Tensor theta({1}, 0.0f, true);
    NamedTensors params{{"theta", theta}};
    AdamState state = AdamState::init(params);
    for (int step = 1; step <= 2; ++step) {
      theta.clear_grad();
      detail::accumulate(theta, std::vector<float>{1.0f});
      adam_step(state, params, 0.1);
      // With a constant gradient both bias-corrected moments equal g and g^2.
      CHECK(std::abs(theta.item() - (-0.1 * step / (1.0 + 1e-8))) < 1e-7);
    }
    CHECK(state.t == 2);
  }
  SUBCASE("first step moves by lr in the sign of the gradient") {
    Tensor w = random_tensor({5}, 4);
    w.set_requires_grad(true);
    const auto before = values(w);
    NamedTensors params{{"w", w}};
    AdamState state = AdamState::init(params);
    std::vector<float> g{0.3f, -2.0f, 1e-3f, -0.5f, 4.0f};
    detail::accumulate(w, g);
    adam_step(state, params, 0.01);
    for (std::size_t i = 0; i < g.size(); ++i) {
      CHECK(w.data()[i] - before[i] == doctest::Approx(g[i] > 0 ? -0.01 : 0.01).epsilon(1e-4));
    }
  }
  SUBCASE("zero gradients never move parameters") {
    Tensor w = random_tensor({3, 3}, 5);
    w.set_requires_grad(true);
    const auto before = values(w);
    NamedTensors params{{"w", w}};
    AdamState state = AdamState::init(params);
    for (int t = 0; t < 10; ++t) {
      detail::accumulate(w, std::vector<float>(9, 0.0f));
      adam_step(state, params, 0.1);
      w.clear_grad();
      adam_step(state, params, 0.1);
      CHECK(values(w) == before);
    }
  }
  SUBCASE("NaN gradients name the parameter") {
    Tensor w({2}, 1.0f, true);
    NamedTensors params{{"blocks.0.weird", w}};
    AdamState state = AdamState::init(params);
    detail::accumulate(w, std::vector<float>{0.0f, std::numeric_limits<float>::quiet_NaN()});
    try {
      adam_step(state, params, 0.1);
      FAIL("expected NumericalFailure");
    } catch (const NumericalFailure& e) {
      CHECK(std::string(e.what()).find("blocks.0.weird") != std::string::npos);
    }
    CHECK(w.data()[0] == 1.0f);
  }
}

TEST_CASE("learning rate schedule") {
  CHECK(lr_at(LrSchedule{}, 0) == 1e-4);
  const auto b = LrSchedule::for_variant("B"), s = LrSchedule::for_variant("S"),
             l = LrSchedule::for_variant("L");
  CHECK(b.period == 40000);
  CHECK(s.period == 100000);
  CHECK(l.period == 200000);
  CHECK(lr_at(b, 50000) == 5e-5);
  CHECK(lr_at(l, 199999) == 1e-4);
  CHECK(lr_at(l, 200000) == 5e-5);
  CHECK(lr_at(s, 99999) == 1e-4);
  CHECK(lr_at(s, 100001) == 5e-5);
  CHECK(lr_at(b, 120000) == 1.25e-5);
  double prev = 1.0;
  for (std::int64_t i = 0; i < 500000; i += 997) {
    CHECK(lr_at(b, i) <= prev);
    prev = lr_at(b, i);
  }
  CHECK_THROWS(LrSchedule::for_variant("Q"));
}

TEST_CASE("loss decreases on a fixed batch at the default rate") {
  auto state = TrainState::init(ModelConfig::tiny(), 7);
  const PatchBatch batch = rstca::testing::synthetic_batch(8, 64, 100);
  float prev = evaluate_loss(state.net, batch);
  const float first = prev;
  int rises = 0;
  for (int i = 0; i < 50; ++i) {
    train_step(state, batch, lr_at(LrSchedule{}, i));
    const float now = evaluate_loss(state.net, batch);
    if (now >= prev) ++rises;
    prev = now;
  }
  CHECK(rises <= 5);
  CHECK(prev < first);
}

TEST_CASE("non-finite loss halts before the update") {
  auto state = TrainState::init(ModelConfig::tiny(), 8);
  PatchBatch batch = rstca::testing::synthetic_batch(2, 16, 9);
  batch.targets.mutable_data()[5] = std::numeric_limits<float>::infinity();
  const auto before = values(state.net.parameters()[0].second);
  CHECK_THROWS_AS(train_step(state, batch, 1e-3), NumericalFailure);
  CHECK(values(state.net.parameters()[0].second) == before);
  CHECK(state.iteration == 0);
}

TEST_CASE("checkpoints") {
  const auto dir = rstca::testing::fresh_temp_dir("rstca_training_test");
  const Dataset ds = small_dataset();

  SUBCASE("zero iterations saves the initialization") {
    auto state = TrainState::init(ModelConfig::tiny(), 11);
    auto cfg = small_train(0);
    cfg.checkpoint_path = dir / "init.rstca";
    CHECK(train(state, ds, cfg).empty());
    const auto fresh = RstcaNet::build(ModelConfig::tiny(), 11).parameters();
    const auto ck = read_checkpoint(cfg.checkpoint_path);
    REQUIRE(ck.params.size() == fresh.size());
    for (std::size_t i = 0; i < fresh.size(); ++i) {
      CHECK(ck.params[i].first == fresh[i].first);
      CHECK(bit_equal(ck.params[i].second, fresh[i].second));
    }
    CHECK(ck.iteration == 0);
    CHECK(ck.seed == 11);
  }

  SUBCASE("round trip keeps the next loss") {
    auto state = TrainState::init(ModelConfig::tiny(), 12);
    train(state, ds, small_train(3));
    save_checkpoint(dir / "mid.rstca", state);
    auto loaded = load_train_state(dir / "mid.rstca");
    CHECK(loaded.iteration == 3);
    CHECK(loaded.adam.t == state.adam.t);
    const auto a = state.net.parameters(), b = loaded.net.parameters();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(bit_equal(a[i].second, b[i].second));
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(bit_equal(state.adam.m[i], loaded.adam.m[i]));
      CHECK(bit_equal(state.adam.v[i], loaded.adam.v[i]));
    }
    auto rng_a = iteration_rng(12, 3), rng_b = iteration_rng(12, 3);
    const PatchBatch pa = sample_patches(ds, 2, 16, rng_a);
    const PatchBatch pb = sample_patches(ds, 2, 16, rng_b);
    const float la = train_step(state, pa, 1e-3);
    const float lb = train_step(loaded, pb, 1e-3);
    CHECK(std::bit_cast<std::uint32_t>(la) == std::bit_cast<std::uint32_t>(lb));
    CHECK(evaluate_loss(state.net, pa) == evaluate_loss(loaded.net, pa));
  }

  SUBCASE("resume reproduces an uninterrupted run") {
    auto straight = TrainState::init(ModelConfig::tiny(), 13);
    const auto full = train(straight, ds, small_train(6));

    auto first = TrainState::init(ModelConfig::tiny(), 13);
    auto cfg = small_train(3);
    cfg.checkpoint_path = dir / "resume.rstca";
    const auto head = train(first, ds, cfg);
    auto resumed = load_train_state(cfg.checkpoint_path);
    const auto tail = train(resumed, ds, small_train(6));
    REQUIRE(head.size() == 3);
    REQUIRE(tail.size() == 3);
    for (int i = 0; i < 3; ++i) {
      CHECK(head[i].loss == full[i].loss);
      CHECK(tail[i].loss == full[i + 3].loss);
      CHECK(tail[i].iteration == full[i + 3].iteration);
    }
  }

  SUBCASE("mismatched architecture is named") {
    auto state = TrainState::init(ModelConfig::tiny(), 14);
    save_checkpoint(dir / "tiny.rstca", state);
    auto other_cfg = ModelConfig::tiny();
    other_cfg.channels = 8;
    auto other = RstcaNet::build(other_cfg);
    try {
      load_parameters(other, read_checkpoint(dir / "tiny.rstca").params);
      FAIL("expected CheckpointMismatch");
    } catch (const CheckpointMismatch& e) {
      CHECK(std::string(e.what()).find("embed.w") != std::string::npos);
    }
    auto fewer_cfg = ModelConfig::tiny();
    fewer_cfg.ca_mode = CaMode::kNone;
    auto fewer = RstcaNet::build(fewer_cfg);
    CHECK_THROWS_AS(load_parameters(fewer, read_checkpoint(dir / "tiny.rstca").params),
                    CheckpointMismatch);
  }

  SUBCASE("corrupt files") {
    std::ofstream(dir / "junk.rstca") << "hello";
    CHECK_THROWS_AS(read_checkpoint(dir / "junk.rstca"), CheckpointFormatError);
    auto state = TrainState::init(ModelConfig::tiny(), 15);
    save_checkpoint(dir / "cut.rstca", state);
    std::filesystem::resize_file(dir / "cut.rstca", std::filesystem::file_size(dir / "cut.rstca") - 16);
    CHECK_THROWS_AS(read_checkpoint(dir / "cut.rstca"), CheckpointFormatError);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("loss log format") {
  std::ostringstream out;
  write_loss_header(out);
  write_loss_row(out, {12, 1e-4, 0.125f});
  CHECK(out.str() == "iteration,lr,loss\n12,0.0001,0.125\n");
}
