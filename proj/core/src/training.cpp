// Copyright 2026 The rstca Authors
// SPDX-License-Identifier: Apache-2.0

#include "rstca/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "rstca/checkpoint.hpp"
#include "rstca/ops.hpp"

namespace rstca {

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("l1_loss: " + to_string(pred.shape()) + " vs " + to_string(target.shape()));
  }
  if (pred.numel() == 0) throw ShapeError("l1_loss of empty tensors");
  auto p = pred.data();
  auto t = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += std::fabs(static_cast<double>(p[i]) - t[i]);
  const double n = static_cast<double>(p.size());
  Tensor out = Tensor::scalar(static_cast<float>(acc / n));
  if (detail::should_record({&pred, &target})) {
    detail::record({pred, target}, out, [pred, target, out, n]() {
      const float g = out.grad()[0] / static_cast<float>(n);
      auto p = pred.data();
      auto t = target.data();
      std::vector<float> gp(p.size());
      for (std::size_t i = 0; i < p.size(); ++i) {
        gp[i] = p[i] > t[i] ? g : (p[i] < t[i] ? -g : 0.0f);
      }
      if (pred.requires_grad()) detail::accumulate(pred, gp);
      if (target.requires_grad()) {
        for (auto& v : gp) v = -v;
        detail::accumulate(target, gp);
      }
    });
  }
  return out;
}

AdamState AdamState::init(const NamedTensors& params, AdamConfig config) {
  AdamState s;
  s.config = config;
  for (const auto& [name, p] : params) {
    s.m.emplace_back(p.shape());
    s.v.emplace_back(p.shape());
  }
  return s;
}

void adam_step(AdamState& state, const NamedTensors& params, double lr) {
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: state tracks " + std::to_string(state.m.size()) +
                                " tensors, got " + std::to_string(params.size()));
  }
  for (const auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    for (float g : p.grad()) {
      if (!std::isfinite(g)) throw NumericalFailure("non-finite gradient in parameter '" + name + "'");
    }
  }
  const auto& c = state.config;
  ++state.t;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor p = params[k].second;
    auto theta = p.mutable_data();
    auto g = p.grad();
    auto m = state.m[k].mutable_data();
    auto v = state.v[k].mutable_data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      double gi = g.empty() ? 0.0 : g[i];
      if (c.weight_decay != 0.0) gi += c.weight_decay * theta[i];
      m[i] = static_cast<float>(c.beta1 * m[i] + (1.0 - c.beta1) * gi);
      v[i] = static_cast<float>(c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi);
      const double mhat = m[i] / bc1, vhat = v[i] / bc2;
      theta[i] = static_cast<float>(theta[i] - lr * mhat / (std::sqrt(vhat) + c.eps));
    }
  }
}

void clip_grad_norm(const NamedTensors& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, p] : params) {
    for (float g : p.grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  const auto f = static_cast<float>(max_norm / norm);
  for (const auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    Tensor t = p;
    for (auto& g : t.mutable_grad()) g *= f;
  }
}

LrSchedule LrSchedule::for_variant(const std::string& name) {
  if (name == "B" || name == "tiny") return {1e-4, 40000};
  if (name == "S") return {1e-4, 100000};
  if (name == "L") return {1e-4, 200000};
  throw std::invalid_argument("unknown variant '" + name + "' (expected B|S|L|tiny)");
}

double lr_at(const LrSchedule& schedule, std::int64_t iter) {
  if (iter < 0) throw std::invalid_argument("lr_at: negative iteration");
  if (schedule.period < 1) throw std::invalid_argument("lr_at: period must be positive");
  return std::ldexp(schedule.base, -static_cast<int>(std::min<std::int64_t>(iter / schedule.period, 2000)));
}

TrainState TrainState::init(const ModelConfig& cfg, std::uint64_t seed, AdamConfig adam) {
  TrainState s{RstcaNet::build(cfg, seed), {}, 0, seed};
  s.adam = AdamState::init(s.net.parameters(), adam);
  return s;
}

std::mt19937_64 iteration_rng(std::uint64_t seed, std::int64_t iteration) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(iteration), static_cast<std::uint32_t>(iteration >> 32)};
  return std::mt19937_64(seq);
}

float train_step(TrainState& state, const PatchBatch& batch, double lr, double clip_norm) {
  const auto params = state.net.parameters();
  for (const auto& [name, p] : params) {
    Tensor t = p;
    t.clear_grad();
  }
  float value = 0.0f;
  {
    Tape tape;
    Tensor loss = l1_loss(state.net.forward(batch.mosaics), batch.targets);
    value = loss.item();
    if (!std::isfinite(value)) {
      throw NumericalFailure("non-finite loss at iteration " + std::to_string(state.iteration));
    }
    tape.backward(loss);
  }
  if (clip_norm > 0.0) clip_grad_norm(params, clip_norm);
  adam_step(state.adam, params, lr);
  ++state.iteration;
  return value;
}

float evaluate_loss(const RstcaNet& net, const PatchBatch& batch) {
  NoGradGuard guard;
  return l1_loss(net.forward(batch.mosaics), batch.targets).item();
}

std::vector<TrainRecord> train(TrainState& state, const Dataset& dataset, const TrainConfig& cfg,
                               const std::function<void(const TrainRecord&)>& on_step) {
  std::vector<TrainRecord> log;
  const bool saving = !cfg.checkpoint_path.empty();
  while (state.iteration < cfg.iterations) {
    const auto it = state.iteration;
    auto rng = iteration_rng(state.seed, it);
    const PatchBatch batch = sample_patches(dataset, cfg.batch, cfg.patch, rng, cfg.augment);
    const double lr = lr_at(cfg.schedule, it);
    const float loss = train_step(state, batch, lr, cfg.clip_norm);
    log.push_back({it, lr, loss});
    if (on_step) on_step(log.back());
    if (saving && cfg.checkpoint_every > 0 && state.iteration % cfg.checkpoint_every == 0) {
      save_checkpoint(cfg.checkpoint_path, state);
    }
  }
  if (saving) save_checkpoint(cfg.checkpoint_path, state);
  return log;
}

void write_loss_header(std::ostream& out) { out << "iteration,lr,loss\n"; }

void write_loss_row(std::ostream& out, const TrainRecord& r) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g\n", static_cast<long long>(r.iteration), r.lr,
                static_cast<double>(r.loss));
  out << buf;
}

}  // namespace rstca
