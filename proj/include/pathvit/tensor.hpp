// Copyright 2026 The pathvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace pathvit {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {
struct Node;
}

/// Dense row-major tensor of doubles with an optional gradient slot.
///
/// A Tensor is a cheap handle: copies share the same storage. Values are
/// fixed once an op has produced them; only leaf tensors (parameters) may be
/// mutated through mutable_data(), which is how optimizers and finite
/// difference probes update weights in place. When any input requires a
/// gradient the op is recorded on the gradient tape, and backward() replays
/// the tape in reverse recording order.
///
/// Every constructor and op rejects non-finite values with NumericError.
class Tensor {
 public:
  Tensor();

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor ones(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  std::size_t dim(std::size_t axis) const;

  std::span<const double> data() const;
  /// Writable view of a leaf tensor. Throws ContractError on op outputs.
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool is_leaf() const;

  /// Gradient accumulated by backward(); empty until one reaches this tensor.
  std::span<const double> grad() const;
  bool has_grad() const;
  void zero_grad();

  /// Reverse-mode sweep from this scalar. Leaf gradients accumulate across
  /// calls until zero_grad(); intermediate gradients are recomputed each call.
  void backward() const;

  /// Detached copy: same values, no history, no gradient.
  Tensor detach() const;
  Tensor clone(bool requires_grad) const;

  std::uint64_t sequence() const;
  const char* op_name() const;

  // Internal, used by ops.
  explicit Tensor(std::shared_ptr<detail::Node> node);
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Ops recorded on a tape, ordered by recording sequence.
class GradTape {
 public:
  /// Collects every op reachable from root that contributes to a gradient.
  static GradTape collect(const Tensor& root);

  std::size_t size() const { return nodes_.size(); }
  /// Sequence numbers in replay order (strictly decreasing).
  std::vector<std::uint64_t> replay_order() const;
  void backward(const Tensor& root) const;

 private:
  std::vector<std::shared_ptr<detail::Node>> nodes_;  // ascending sequence
};

/// Disables tape recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Element-wise; operands must have identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);

/// GELU, tanh approximation:
/// 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
Tensor gelu(const Tensor& x);

// Explicit broadcasting: b's shape must equal the trailing axes of x.
Tensor broadcast_add(const Tensor& x, const Tensor& b);
Tensor broadcast_mul(const Tensor& x, const Tensor& b);

Tensor reshape(const Tensor& x, Shape shape);
/// Swaps the two axes of a rank-2 tensor.
Tensor transpose(const Tensor& x);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
/// Half-open range [begin, end) along axis.
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);

Tensor reduce_sum(const Tensor& x);
Tensor reduce_mean(const Tensor& x);
/// Reduces over axis and drops it.
Tensor reduce_sum(const Tensor& x, std::size_t axis);
Tensor reduce_mean(const Tensor& x, std::size_t axis);

Tensor matmul(const Tensor& a, const Tensor& b);

// Along the last axis, with max subtraction.
Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

/// Mean negative log-likelihood of labels under softmax(logits), fused so that
/// a vanishing true-class probability never produces a NaN.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|)
/// for a scalar function of one tensor.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h = 1e-5);

/// Same measure for a scalar function of several leaf tensors, perturbed in
/// place. When coordinates_per_tensor > 0 only that many coordinates per
/// tensor are probed, chosen with the given seed.
double grad_check(const std::function<Tensor()>& f, std::span<Tensor> leaves, double h = 1e-5,
                  std::size_t coordinates_per_tensor = 0, std::uint64_t seed = 0);

}  // namespace pathvit
