// Copyright 2026 The pathvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "pathvit/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <unordered_set>

#include "pathvit/errors.hpp"
#include "pathvit/random.hpp"

namespace pathvit {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::uint64_t seq = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward;
};

}  // namespace detail

using detail::Node;

namespace {

std::atomic<std::uint64_t> g_sequence{0};
thread_local bool g_grad_enabled = true;

std::uint64_t next_sequence() { return g_sequence.fetch_add(1, std::memory_order_relaxed); }

std::string stats(std::span<const double> values) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  std::size_t non_finite = 0;
  for (double v : values) {
    if (!std::isfinite(v)) {
      ++non_finite;
      continue;
    }
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::ostringstream os;
  os << "{n=" << values.size() << " min=" << lo << " max=" << hi << " non_finite=" << non_finite << "}";
  return os.str();
}

std::vector<double>& grad_of(Node& n) {
  if (n.grad.empty()) n.grad.assign(n.data.size(), 0.0);
  return n.grad;
}

Tensor make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor: shape " + to_string(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  for (std::size_t e : shape) {
    if (e == 0) throw DimensionError("tensor: zero extent in shape " + to_string(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  for (double v : node->data) {
    if (!std::isfinite(v)) throw NumericError("tensor: non-finite value in " + to_string(node->shape));
  }
  node->requires_grad = requires_grad;
  node->seq = next_sequence();
  return Tensor(std::move(node));
}

// Builds an op output. The backward rule is kept only when recording is on
// and some input needs a gradient.
Tensor make_op(const char* op, Shape shape, std::vector<double> values, std::span<const Tensor> inputs,
               std::function<void(Node&)> backward) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      std::ostringstream os;
      os << op << ": produced non-finite output; inputs";
      for (const Tensor& t : inputs) os << " " << to_string(t.shape()) << stats(t.data());
      throw NumericError(os.str());
    }
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->op = op;
  node->seq = next_sequence();
  bool needs = false;
  if (g_grad_enabled) {
    for (const Tensor& t : inputs) needs = needs || t.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    for (const Tensor& t : inputs) node->inputs.push_back(t.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

Tensor make_op(const char* op, Shape shape, std::vector<double> values,
               std::initializer_list<const Tensor*> inputs, std::function<void(Node&)> backward) {
  std::vector<Tensor> held;
  held.reserve(inputs.size());
  for (const Tensor* t : inputs) held.push_back(*t);
  return make_op(op, std::move(shape), std::move(values), std::span<const Tensor>(held), std::move(backward));
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor");
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

// Splits a shape around axis into (outer, extent, inner).
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

template <typename Fwd, typename Deriv>
Tensor unary(const char* op, const Tensor& x, Fwd fwd, Deriv deriv) {
  require_defined(x, op);
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  return make_op(op, x.shape(), std::move(out), {&x}, [deriv](Node& self) {
    Node& a = *self.inputs[0];
    if (!a.requires_grad) return;
    auto& ga = grad_of(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * deriv(a.data[i], self.data[i]);
  });
}

void check_trailing(const char* op, const Tensor& x, const Tensor& b) {
  require_defined(x, op);
  require_defined(b, op);
  const auto& xs = x.shape();
  const auto& bs = b.shape();
  bool ok = bs.size() <= xs.size() && !bs.empty();
  for (std::size_t i = 0; ok && i < bs.size(); ++i) ok = bs[i] == xs[xs.size() - bs.size() + i];
  if (!ok) {
    throw DimensionError(std::string(op) + ": " + to_string(bs) + " is not a trailing shape of " +
                         to_string(xs));
  }
}

}  // namespace

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

// --- Tensor --------------------------------------------------------------

Tensor::Tensor() = default;
Tensor::Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }
Tensor Tensor::ones(Shape shape, bool requires_grad) { return full(std::move(shape), 1.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return make_leaf(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return make_leaf(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return make_leaf({}, {value}, requires_grad); }

const Shape& Tensor::shape() const {
  require_defined(*this, "shape");
  return node_->shape;
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) throw DimensionError("dim: axis " + std::to_string(axis) + " out of range for " + to_string(shape()));
  return node_->shape[axis];
}

std::span<const double> Tensor::data() const {
  require_defined(*this, "data");
  return node_->data;
}

std::span<double> Tensor::mutable_data() {
  require_defined(*this, "mutable_data");
  if (node_->backward) throw ContractError("mutable_data: only leaf tensors may be modified");
  return node_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item: tensor " + to_string(shape()) + " is not a scalar");
  return node_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw DimensionError("at: index rank does not match " + to_string(s));
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= s[axis]) throw DimensionError("at: index out of range for " + to_string(s));
    flat = flat * s[axis] + i;
    ++axis;
  }
  return node_->data[flat];
}

bool Tensor::requires_grad() const { return defined() && node_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  require_defined(*this, "set_requires_grad");
  if (node_->backward) throw ContractError("set_requires_grad: only leaf tensors");
  node_->requires_grad = on;
}

bool Tensor::is_leaf() const { return defined() && !node_->backward; }

std::span<const double> Tensor::grad() const {
  require_defined(*this, "grad");
  return node_->grad;
}

bool Tensor::has_grad() const { return defined() && !node_->grad.empty(); }

void Tensor::zero_grad() {
  require_defined(*this, "zero_grad");
  node_->grad.clear();
}

void Tensor::backward() const { GradTape::collect(*this).backward(*this); }

Tensor Tensor::detach() const { return clone(false); }

Tensor Tensor::clone(bool requires_grad) const {
  require_defined(*this, "clone");
  return make_leaf(node_->shape, node_->data, requires_grad);
}

std::uint64_t Tensor::sequence() const {
  require_defined(*this, "sequence");
  return node_->seq;
}

const char* Tensor::op_name() const {
  require_defined(*this, "op_name");
  return node_->op;
}

// --- GradTape ------------------------------------------------------------

GradTape GradTape::collect(const Tensor& root) {
  GradTape tape;
  if (!root.defined()) return tape;
  std::unordered_set<const Node*> seen;
  std::vector<std::shared_ptr<Node>> stack{root.node()};
  while (!stack.empty()) {
    auto n = std::move(stack.back());
    stack.pop_back();
    if (!n->backward || !seen.insert(n.get()).second) continue;
    for (const auto& in : n->inputs) stack.push_back(in);
    tape.nodes_.push_back(std::move(n));
  }
  std::sort(tape.nodes_.begin(), tape.nodes_.end(),
            [](const auto& a, const auto& b) { return a->seq < b->seq; });
  return tape;
}

std::vector<std::uint64_t> GradTape::replay_order() const {
  std::vector<std::uint64_t> order;
  order.reserve(nodes_.size());
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) order.push_back((*it)->seq);
  return order;
}

void GradTape::backward(const Tensor& root) const {
  require_defined(root, "backward");
  if (root.numel() != 1) {
    throw ContractError("backward: root must be a scalar, got shape " + to_string(root.shape()));
  }
  if (!root.requires_grad()) throw ContractError("backward: root is not connected to any tensor requiring grad");
  Node& r = *root.node();
  if (!r.backward) {
    grad_of(r)[0] += 1.0;
    return;
  }
  for (const auto& n : nodes_) n->grad.assign(n->data.size(), 0.0);
  r.grad[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)->backward(**it);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

// --- element-wise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_op("add", a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      auto& g = grad_of(*in);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_op("sub", a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      Node& in = *self.inputs[k];
      if (!in.requires_grad) continue;
      const double sign = k == 0 ? 1.0 : -1.0;
      auto& g = grad_of(in);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_op("mul", a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    // Read both operands before either grad is touched; x and y may alias.
    if (x.requires_grad) {
      auto& g = grad_of(x);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y.data[i];
    }
    if (y.requires_grad) {
      auto& g = grad_of(y);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x.data[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  return unary("scale", x, [factor](double v) { return v * factor; },
               [factor](double, double) { return factor; });
}

Tensor exp(const Tensor& x) {
  return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary("log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Tensor gelu(const Tensor& x) {
  return unary(
      "gelu", x,
      [](double v) { return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v))); },
      [](double v, double) {
        const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
        return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
      });
}

Tensor broadcast_add(const Tensor& x, const Tensor& b) {
  check_trailing("broadcast_add", x, b);
  const std::size_t inner = b.numel();
  const std::size_t outer = x.numel() / inner;
  std::vector<double> out(x.numel());
  auto xd = x.data();
  auto bd = b.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] = xd[o * inner + i] + bd[i];
  return make_op("broadcast_add", x.shape(), std::move(out), {&x, &b}, [outer, inner](Node& self) {
    Node& xn = *self.inputs[0];
    Node& bn = *self.inputs[1];
    if (xn.requires_grad) {
      auto& g = grad_of(xn);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (bn.requires_grad) {
      auto& g = grad_of(bn);
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) g[i] += self.grad[o * inner + i];
    }
  });
}

Tensor broadcast_mul(const Tensor& x, const Tensor& b) {
  check_trailing("broadcast_mul", x, b);
  const std::size_t inner = b.numel();
  const std::size_t outer = x.numel() / inner;
  std::vector<double> out(x.numel());
  auto xd = x.data();
  auto bd = b.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] = xd[o * inner + i] * bd[i];
  return make_op("broadcast_mul", x.shape(), std::move(out), {&x, &b}, [outer, inner](Node& self) {
    Node& xn = *self.inputs[0];
    Node& bn = *self.inputs[1];
    if (xn.requires_grad) {
      auto& g = grad_of(xn);
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) g[o * inner + i] += self.grad[o * inner + i] * bn.data[i];
    }
    if (bn.requires_grad) {
      auto& g = grad_of(bn);
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) g[i] += self.grad[o * inner + i] * xn.data[o * inner + i];
    }
  });
}

// --- layout ----------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined(x, "reshape");
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  for (std::size_t e : shape) {
    if (e == 0) throw DimensionError("reshape: zero extent in " + to_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_op("reshape", std::move(shape), std::move(out), {&x}, [](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& g = grad_of(in);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor transpose(const Tensor& x) {
  require_defined(x, "transpose");
  if (x.rank() != 2) throw DimensionError("transpose: expected rank 2, got " + to_string(x.shape()));
  const std::size_t rows = x.dim(0);
  const std::size_t cols = x.dim(1);
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = in[r * cols + c];
  return make_op("transpose", {cols, rows}, std::move(out), {&x}, [rows, cols](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& g = grad_of(in);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += self.grad[c * rows + r];
  });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  for (const auto& p : parts) require_defined(p, "concat");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range for " + to_string(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    if (!ok) throw DimensionError("concat: shape mismatch " + to_string(first) + " vs " + to_string(s));
    out_shape[axis] += s[axis];
  }
  const AxisSplit total = split_axis(out_shape, axis);
  std::vector<std::size_t> widths;  // contiguous chunk per outer index
  for (const auto& p : parts) widths.push_back(p.dim(axis) * total.inner);
  const std::size_t row = total.extent * total.inner;
  std::vector<double> out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto in = parts[k].data();
    for (std::size_t o = 0; o < total.outer; ++o)
      std::copy_n(in.begin() + o * widths[k], widths[k], out.begin() + o * row + offset);
    offset += widths[k];
  }
  return make_op("concat", std::move(out_shape), std::move(out), parts,
                 [widths, row, outer = total.outer](Node& self) {
                   std::size_t off = 0;
                   for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                     Node& in = *self.inputs[k];
                     if (in.requires_grad) {
                       auto& g = grad_of(in);
                       for (std::size_t o = 0; o < outer; ++o)
                         for (std::size_t i = 0; i < widths[k]; ++i)
                           g[o * widths[k] + i] += self.grad[o * row + off + i];
                     }
                     off += widths[k];
                   }
                 });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  require_defined(x, "slice");
  if (axis >= x.rank() || begin >= end || end > x.dim(axis)) {
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                         std::to_string(axis) + " invalid for " + to_string(x.shape()));
  }
  const AxisSplit s = split_axis(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  const std::size_t width = (end - begin) * s.inner;
  const std::size_t row = s.extent * s.inner;
  const std::size_t start = begin * s.inner;
  std::vector<double> out(s.outer * width);
  auto in = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) std::copy_n(in.begin() + o * row + start, width, out.begin() + o * width);
  return make_op("slice", std::move(out_shape), std::move(out), {&x},
                 [outer = s.outer, width, row, start](Node& self) {
                   Node& in = *self.inputs[0];
                   if (!in.requires_grad) return;
                   auto& g = grad_of(in);
                   for (std::size_t o = 0; o < outer; ++o)
                     for (std::size_t i = 0; i < width; ++i) g[o * row + start + i] += self.grad[o * width + i];
                 });
}

// --- reductions ----------------------------------------------------------

namespace {

Tensor reduce_all(const char* op, const Tensor& x, double factor) {
  require_defined(x, op);
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_op(op, {}, {total * factor}, {&x}, [factor](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& g = grad_of(in);
    for (double& v : g) v += self.grad[0] * factor;
  });
}

Tensor reduce_axis(const char* op, const Tensor& x, std::size_t axis, bool mean) {
  require_defined(x, op);
  if (axis >= x.rank()) throw DimensionError(std::string(op) + ": axis out of range for " + to_string(x.shape()));
  const AxisSplit s = split_axis(x.shape(), axis);
  const double factor = mean ? 1.0 / static_cast<double>(s.extent) : 1.0;
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<double> out(s.outer * s.inner, 0.0);
  auto in = x.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t e = 0; e < s.extent; ++e)
      for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += in[(o * s.extent + e) * s.inner + i];
  for (double& v : out) v *= factor;
  return make_op(op, std::move(out_shape), std::move(out), {&x}, [s, factor](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& g = grad_of(in);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t e = 0; e < s.extent; ++e)
        for (std::size_t i = 0; i < s.inner; ++i)
          g[(o * s.extent + e) * s.inner + i] += self.grad[o * s.inner + i] * factor;
  });
}

}  // namespace

Tensor reduce_sum(const Tensor& x) { return reduce_all("reduce_sum", x, 1.0); }
Tensor reduce_mean(const Tensor& x) {
  return reduce_all("reduce_mean", x, 1.0 / static_cast<double>(x.numel()));
}
Tensor reduce_sum(const Tensor& x, std::size_t axis) { return reduce_axis("reduce_sum", x, axis, false); }
Tensor reduce_mean(const Tensor& x, std::size_t axis) { return reduce_axis("reduce_mean", x, axis, true); }

// --- matmul ----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: shape mismatch " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  const std::size_t m = a.dim(0);
  const std::size_t k = a.dim(1);
  const std::size_t n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      const double* brow = bd.data() + p * n;
      double* orow = out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  return make_op("matmul", {m, n}, std::move(out), {&a, &b}, [m, k, n](Node& self) {
    Node& an = *self.inputs[0];
    Node& bn = *self.inputs[1];
    const auto& g = self.grad;
    if (an.requires_grad) {
      // dA = G * B^T
      std::vector<double> da(m * k, 0.0);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bn.data[p * n + j];
          da[i * k + p] = acc;
        }
      auto& ga = grad_of(an);
      for (std::size_t i = 0; i < da.size(); ++i) ga[i] += da[i];
    }
    if (bn.requires_grad) {
      // dB = A^T * G
      std::vector<double> db(k * n, 0.0);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = an.data[i * k + p];
          for (std::size_t j = 0; j < n; ++j) db[p * n + j] += av * g[i * n + j];
        }
      auto& gb = grad_of(bn);
      for (std::size_t i = 0; i < db.size(); ++i) gb[i] += db[i];
    }
  });
}

// --- softmax family --------------------------------------------------------

Tensor softmax(const Tensor& x) {
  require_defined(x, "softmax");
  if (x.rank() == 0) throw DimensionError("softmax: needs at least one axis");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = in.data() + r * n;
    double* yr = out.data() + r * n;
    const double mx = *std::max_element(xr, xr + n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += (yr[i] = std::exp(xr[i] - mx));
    for (std::size_t i = 0; i < n; ++i) yr[i] /= total;
  }
  return make_op("softmax", x.shape(), std::move(out), {&x}, [rows, n](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& g = grad_of(in);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.data.data() + r * n;
      const double* gy = self.grad.data() + r * n;
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += gy[i] * y[i];
      for (std::size_t i = 0; i < n; ++i) g[r * n + i] += y[i] * (gy[i] - dot);
    }
  });
}

Tensor log_softmax(const Tensor& x) {
  require_defined(x, "log_softmax");
  if (x.rank() == 0) throw DimensionError("log_softmax: needs at least one axis");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = in.data() + r * n;
    const double mx = *std::max_element(xr, xr + n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += std::exp(xr[i] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t i = 0; i < n; ++i) out[r * n + i] = xr[i] - lse;
  }
  return make_op("log_softmax", x.shape(), std::move(out), {&x}, [rows, n](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& g = grad_of(in);
    for (std::size_t r = 0; r < rows; ++r) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) total += self.grad[r * n + i];
      for (std::size_t i = 0; i < n; ++i)
        g[r * n + i] += self.grad[r * n + i] - std::exp(self.data[r * n + i]) * total;
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_defined(x, "layer_norm");
  if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
  if (x.rank() == 0) throw DimensionError("layer_norm: needs at least one axis");
  const std::size_t d = x.shape().back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw DimensionError("layer_norm: gamma " + to_string(gamma.shape()) + " / beta " + to_string(beta.shape()) +
                         " do not match feature axis of " + to_string(x.shape()));
  }
  const std::size_t rows = x.numel() / d;
  std::vector<double> normed(x.numel());
  std::vector<double> rstd(rows);
  std::vector<double> out(x.numel());
  auto in = x.data();
  auto gd = gamma.data();
  auto bd = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = in.data() + r * d;
    double mean = 0.0;
    for (std::size_t i = 0; i < d; ++i) mean += xr[i];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= static_cast<double>(d);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < d; ++i) {
      normed[r * d + i] = (xr[i] - mean) * rstd[r];
      out[r * d + i] = gd[i] * normed[r * d + i] + bd[i];
    }
  }
  return make_op("layer_norm", x.shape(), std::move(out), {&x, &gamma, &beta},
                 [rows, d, normed = std::move(normed), rstd = std::move(rstd)](Node& self) {
                   Node& xn = *self.inputs[0];
                   Node& gn = *self.inputs[1];
                   Node& bn = *self.inputs[2];
                   const auto& gy = self.grad;
                   if (gn.requires_grad) {
                     auto& g = grad_of(gn);
                     for (std::size_t r = 0; r < rows; ++r)
                       for (std::size_t i = 0; i < d; ++i) g[i] += gy[r * d + i] * normed[r * d + i];
                   }
                   if (bn.requires_grad) {
                     auto& g = grad_of(bn);
                     for (std::size_t r = 0; r < rows; ++r)
                       for (std::size_t i = 0; i < d; ++i) g[i] += gy[r * d + i];
                   }
                   if (xn.requires_grad) {
                     auto& g = grad_of(xn);
                     const double inv_d = 1.0 / static_cast<double>(d);
                     for (std::size_t r = 0; r < rows; ++r) {
                       double mean_g = 0.0;
                       double mean_gx = 0.0;
                       for (std::size_t i = 0; i < d; ++i) {
                         const double gh = gy[r * d + i] * gn.data[i];
                         mean_g += gh;
                         mean_gx += gh * normed[r * d + i];
                       }
                       mean_g *= inv_d;
                       mean_gx *= inv_d;
                       for (std::size_t i = 0; i < d; ++i) {
                         const double gh = gy[r * d + i] * gn.data[i];
                         g[r * d + i] += rstd[r] * (gh - mean_g - normed[r * d + i] * mean_gx);
                       }
                     }
                   }
                 });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_defined(logits, "cross_entropy");
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw DimensionError("cross_entropy: logits " + to_string(logits.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t batch = logits.dim(0);
  const std::size_t classes = logits.dim(1);
  std::vector<int> y(labels.begin(), labels.end());
  for (int label : y) {
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw DataError("cross_entropy: label " + std::to_string(label) + " outside [0," + std::to_string(classes) + ")");
    }
  }
  std::vector<double> probs(logits.numel());
  double loss = 0.0;
  auto in = logits.data();
  for (std::size_t r = 0; r < batch; ++r) {
    const double* xr = in.data() + r * classes;
    const double mx = *std::max_element(xr, xr + classes);
    double total = 0.0;
    for (std::size_t c = 0; c < classes; ++c) total += (probs[r * classes + c] = std::exp(xr[c] - mx));
    for (std::size_t c = 0; c < classes; ++c) probs[r * classes + c] /= total;
    loss -= xr[y[r]] - mx - std::log(total);
  }
  loss /= static_cast<double>(batch);
  return make_op("cross_entropy", {}, {loss}, {&logits},
                 [batch, classes, y = std::move(y), probs = std::move(probs)](Node& self) {
                   Node& in = *self.inputs[0];
                   if (!in.requires_grad) return;
                   auto& g = grad_of(in);
                   const double scale = self.grad[0] / static_cast<double>(batch);
                   for (std::size_t r = 0; r < batch; ++r)
                     for (std::size_t c = 0; c < classes; ++c) {
                       const double target = static_cast<std::size_t>(y[r]) == c ? 1.0 : 0.0;
                       g[r * classes + c] += scale * (probs[r * classes + c] - target);
                     }
                 });
}

// --- gradient check ----------------------------------------------------------

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
  Tensor leaf = x.clone(true);
  std::vector<Tensor> leaves{leaf};
  return grad_check([&] { return f(leaf); }, leaves, h);
}

double grad_check(const std::function<Tensor()>& f, std::span<Tensor> leaves, double h,
                  std::size_t coordinates_per_tensor, std::uint64_t seed) {
  for (auto& t : leaves) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  f().backward();
  Rng rng(seed);
  double worst = 0.0;
  NoGradGuard no_grad;
  for (auto& t : leaves) {
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    std::vector<std::size_t> coords(t.numel());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (coordinates_per_tensor > 0 && coordinates_per_tensor < coords.size()) {
      rng.shuffle(std::span<std::size_t>(coords));
      coords.resize(coordinates_per_tensor);
    }
    auto values = t.mutable_data();
    for (std::size_t i : coords) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = f().item();
      values[i] = saved - h;
      const double down = f().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i])));
    }
  }
  return worst;
}

}  // namespace pathvit
