// Copyright 2026 The rstca Authors
// SPDX-License-Identifier: Apache-2.0

#include "rstca/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace rstca {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + to_string(shape));
    n *= d;
  }
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, float fill, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  const auto n = rstca::numel(shape);
  impl_->shape = std::move(shape);
  impl_->data.assign(static_cast<std::size_t>(n), fill);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<float> values, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  const auto n = rstca::numel(shape);
  if (static_cast<std::int64_t>(values.size()) != n) {
    throw ShapeError("shape " + to_string(shape) + " holds " + std::to_string(n) +
                     " elements but " + std::to_string(values.size()) + " were given");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
  impl_->requires_grad = requires_grad;
}

detail::TensorImpl& Tensor::impl() const {
  if (!impl_) throw std::logic_error("use of an undefined Tensor");
  return *impl_;
}

std::int64_t Tensor::dim(std::int64_t d) const {
  const auto r = rank();
  const auto i = d < 0 ? d + r : d;
  if (i < 0 || i >= r) {
    throw ShapeError("dimension " + std::to_string(d) + " out of range for shape " +
                     to_string(shape()));
  }
  return shape()[static_cast<std::size_t>(i)];
}

float Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return impl().data[0];
}

float Tensor::at(std::initializer_list<std::int64_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw ShapeError("index rank mismatch for " + to_string(s));
  std::int64_t off = 0;
  std::size_t k = 0;
  for (auto i : index) {
    if (i < 0 || i >= s[k]) throw ShapeError("index out of range for " + to_string(s));
    off = off * s[k] + i;
    ++k;
  }
  return impl().data[static_cast<std::size_t>(off)];
}

std::span<float> Tensor::mutable_grad() {
  auto& im = impl();
  if (im.grad.empty()) im.grad.assign(im.data.size(), 0.0f);
  return im.grad;
}

void Tensor::zero_grad() {
  auto& im = impl();
  im.grad.assign(im.data.size(), 0.0f);
}

Tensor Tensor::clone() const { return Tensor(shape(), impl().data); }

Tensor Tensor::detach() const {
  Tensor t;
  t.impl_ = std::make_shared<detail::TensorImpl>();
  t.impl_->shape = shape();
  t.impl_->data = impl().data;
  return t;
}

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() {
  if (g_active_tape == this) g_active_tape = previous_;
}

Tape* Tape::current() { return g_active_tape; }

Tape* Tape::exchange_current(Tape* tape) {
  Tape* prev = g_active_tape;
  g_active_tape = tape;
  return prev;
}

NoGradGuard::NoGradGuard() : saved_(Tape::exchange_current(nullptr)) {}
NoGradGuard::~NoGradGuard() { Tape::exchange_current(saved_); }

void Tape::record(std::vector<Tensor> inputs, Tensor output, BackwardFn fn) {
  if (consumed_) throw std::logic_error("cannot record onto a tape that was already replayed");
  nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(fn)});
}

std::size_t Tape::backward(const Tensor& loss) {
  if (consumed_) {
    throw std::logic_error("backward() called twice on the same tape; re-run the forward pass");
  }
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " +
                     (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  }
  if (nodes_.empty()) throw std::logic_error("backward() on an empty tape");

  // Operations are appended as they execute, so every input was produced by an
  // earlier node (or is a leaf). Reverse order is therefore a valid topological
  // order for the adjoint sweep.
  Tensor seed = loss;
  seed.mutable_grad()[0] += 1.0f;

  std::size_t visited = 0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output.has_grad()) it->fn();
    ++visited;
  }

  // Leaves that did not influence the loss still receive a (zero) gradient.
  std::unordered_set<const void*> produced;
  for (const auto& n : nodes_) produced.insert(n.output.id());
  for (auto& n : nodes_) {
    for (auto& in : n.inputs) {
      if (!in.defined() || !in.requires_grad()) continue;
      if (!produced.contains(in.id()) && !in.has_grad()) in.zero_grad();
    }
  }
  consumed_ = true;
  return visited;
}

std::size_t backward(const Tensor& loss) {
  auto* tape = Tape::current();
  if (!tape) throw std::logic_error("backward() without an active tape");
  return tape->backward(loss);
}

namespace detail {

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::current()) return false;
  for (const auto* t : inputs) {
    if (t && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

void record(std::vector<Tensor> inputs, Tensor& out, Tape::BackwardFn fn) {
  out.set_requires_grad(true);
  Tape::current()->record(std::move(inputs), out, std::move(fn));
}

void accumulate(const Tensor& t, std::span<const float> g) {
  if (!t.defined() || !t.requires_grad()) return;
  Tensor handle = t;
  auto dst = handle.mutable_grad();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

}  // namespace detail
}  // namespace rstca
