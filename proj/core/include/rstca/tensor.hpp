// Copyright 2026 The rstca Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rstca {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Raised by every operation whose operand shapes are incompatible.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
};
}  // namespace detail

/// Dense row-major float32 tensor with an optional gradient buffer.
///
/// Tensor is a shared handle: copies alias the same storage. Operations never
/// mutate their inputs; only parameters (through the optimizer) and gradient
/// buffers change after creation.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f, bool requires_grad = false);
  Tensor(Shape shape, std::vector<float> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return Tensor(std::move(shape), 0.0f, requires_grad);
  }
  static Tensor ones(Shape shape, bool requires_grad = false) {
    return Tensor(std::move(shape), 1.0f, requires_grad);
  }
  static Tensor scalar(float value) { return Tensor(Shape{}, value); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl().shape; }
  std::int64_t rank() const { return static_cast<std::int64_t>(shape().size()); }
  /// Size of dimension `d`; negative values index from the back.
  std::int64_t dim(std::int64_t d) const;
  std::int64_t numel() const { return static_cast<std::int64_t>(impl().data.size()); }

  std::span<const float> data() const { return impl().data; }
  std::span<float> mutable_data() { return impl().data; }
  float item() const;
  float at(std::initializer_list<std::int64_t> index) const;

  bool requires_grad() const { return impl().requires_grad; }
  void set_requires_grad(bool value) { impl().requires_grad = value; }

  bool has_grad() const { return !impl().grad.empty(); }
  std::span<const float> grad() const { return impl().grad; }
  std::span<float> mutable_grad();  // allocates a zero buffer on first use
  void zero_grad();
  void clear_grad() { impl().grad.clear(); }

  /// Deep copy of the values; the copy is a fresh leaf without gradient.
  Tensor clone() const;
  /// Copy of the values as a leaf that does not require grad.
  Tensor detach() const;
  /// Identity of the underlying storage, for sharing checks.
  const void* id() const { return impl_.get(); }

 private:
  detail::TensorImpl& impl() const;
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Ordered record of differentiable operations for one forward pass.
///
/// Constructing a Tape makes it the active tape of the calling thread until it
/// is destroyed; operations executed while no tape is active are not recorded
/// and their outputs never require grad.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current();
  /// Installs `tape` as the thread's active tape and returns the previous one.
  static Tape* exchange_current(Tape* tape);

  void record(std::vector<Tensor> inputs, Tensor output, BackwardFn fn);

  /// Replays the recorded operations in reverse order, seeding d(loss)/d(loss)=1.
  /// Returns the number of operations visited. A tape can be replayed once;
  /// a second call throws std::logic_error.
  std::size_t backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

 private:
  struct Node {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn fn;
  };
  std::vector<Node> nodes_;
  Tape* previous_ = nullptr;
  bool consumed_ = false;
};

/// Suspends recording on the calling thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape* saved_;
};

/// Backward through the calling thread's active tape.
std::size_t backward(const Tensor& loss);

namespace detail {
/// True when an op producing from `inputs` must be recorded.
bool should_record(std::initializer_list<const Tensor*> inputs);
/// Marks `out` as requiring grad and records `fn` on the active tape.
void record(std::vector<Tensor> inputs, Tensor& out, Tape::BackwardFn fn);
/// Adds `g` into `t`'s gradient buffer when `t` requires grad.
void accumulate(const Tensor& t, std::span<const float> g);
}  // namespace detail

}  // namespace rstca
