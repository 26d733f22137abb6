#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eit/kernels.hpp"
#include "eit/tensor.hpp"

namespace eit {

class Rng;
class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid as long as the
// tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Receives the gradient of the node's output and accumulates into the
// gradient buffers of its parents. A null entry means that parent does not
// require a gradient.
using BackwardFn = std::function<void(const Tensor& grad_out, std::span<Tensor* const> parents)>;

class Gradients {
 public:
  // Gradient of the loss with respect to v; zeros when v was not reached.
  Tensor of(Var v) const;
  bool reached(Var v) const;

 private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  std::vector<std::optional<Tensor>> grads_;
};

// Append-only record of primitive operations. Node ids are assigned in
// creation order, so every node's parents precede it and iterating ids in
// reverse is a valid reverse topological order.
class Tape {
 public:
  struct Options {
    // When false no backward closures are stored (inference only).
    bool record = true;
    // Test fixture: the backward rule of every node with this op name has its
    // incoming gradient multiplied by fault_scale.
    std::string fault_op;
    double fault_scale = 1.5;
  };

  // Options for a forward-only tape.
  static Options inference() {
    Options o;
    o.record = false;
    return o;
  }

  Tape() = default;
  explicit Tape(Options options) : options_(std::move(options)) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  Var record(std::string_view op, Tensor value, const std::vector<Var>& parents,
             BackwardFn backward);

  // loss must hold a single element.
  Gradients backward(Var loss) const;

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  const std::string& op(std::size_t id) const { return nodes_.at(id).op; }
  bool requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  bool recording() const { return options_.record; }

 private:
  struct Node {
    std::string op;
    Tensor value;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };

  Options options_;
  std::deque<Node> nodes_;
};

// ---- differentiable primitives -------------------------------------------

Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);
// y's shape must be a suffix of x's shape; y is broadcast over the leading axes.
Var add_broadcast(Var x, Var y);
Var matmul(Var a, Var b);
// x [..., in] * w [in, out] + b [out]
Var linear(Var x, Var w, Var b);
Var permute(Var x, std::vector<std::size_t> perm);
Var reshape(Var x, Shape shape);
Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end);
Var concat(const std::vector<Var>& parts, std::size_t axis);
Var softmax_rows(Var x);
Var layernorm(Var x, Var gain, Var shift, double eps = 1e-6);
Var gelu(Var x);
Var relu(Var x);
Var conv2d(Var input, Var weights, std::optional<Var> bias, const ConvSpec& spec);
Var maxpool2d(Var input, std::size_t window, std::size_t stride);
// Per-channel normalisation of [N,C,H,W] using the current batch statistics.
Var batchnorm2d(Var x, Var gain, Var shift, double eps = 1e-5);
// Inverted dropout; identity when p == 0.
Var dropout(Var x, double p, Rng& rng);
// Mean over rows of -log softmax(logits)[label]. logits [N, K].
Var cross_entropy(Var logits, std::span<const int> labels);
Var sum(Var x);

}  // namespace eit
