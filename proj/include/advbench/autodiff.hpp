#pragma once

// Reverse-mode automatic differentiation over dense tensors.
//
// A Tape owns every intermediate value of one computation. Ops append a
// node; backward() walks the tape once in reverse order. A tape belongs to
// one thread; independent tapes may run concurrently.
//
// Broadcasting is limited to scalar-with-tensor. Everything else requires
// matching shapes.

#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "advbench/tensor.hpp"

namespace advbench {

enum class OpKind {
  leaf,
  add,
  sub,
  mul,
  scale,
  add_scalar,
  matmul,
  affine,
  relu,
  softmax,
  log_softmax,
  log,
  exp,
  max_axis,
  sum,
  mean,
  sum_axis,
  mean_axis,
  l2_norm,
  l2_norm_rows,
  clip,
  concat,
  select_cols,
  reshape,
};

const char* op_name(OpKind kind);

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  // Gradient of the last backward() root w.r.t. this node. Zeros if the
  // node did not receive any gradient.
  Tensor grad() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = false);
  // Non-differentiable leaf that refers to `value` without copying it.
  // `value` must outlive the tape.
  Var constant(const Tensor& value);

  void backward(Var root);

  bool consumed() const noexcept { return consumed_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  OpKind kind(std::size_t id) const { return nodes_.at(id).kind; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }

  // Used by op implementations.
  Var push(OpKind kind, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);
  const Tensor& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const std::vector<double>& grad(std::size_t id) const { return nodes_[id].grad; }
  // Gradient accumulator of a node, allocated (zeroed) on first use.
  std::vector<double>& grad_acc(std::size_t id);

 private:
  struct Node {
    OpKind kind = OpKind::leaf;
    std::vector<std::size_t> inputs;
    Tensor owned;
    const Tensor* borrowed = nullptr;
    bool requires_grad = false;
    std::vector<double> grad;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// Elementwise. Shapes must match, or one side must be a scalar.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var neg(Var a);

// Rank-2 linear algebra. affine(x, w, b) = x * w + b with b a 1 x out row
// added to every row of x * w.
Var matmul(Var a, Var b);
Var affine(Var x, Var w, Var b);

Var relu(Var a);
// (a)_+ ; same function as relu, named for the margin-loss reading.
inline Var hinge(Var a) { return relu(a); }
Var exp(Var a);
Var log(Var a);
Var clip(Var a, double lo, double hi);

// Row-wise over the last axis.
Var softmax(Var a);
Var log_softmax(Var a);

// Reductions. Axis reductions keep the reduced axis with extent 1.
// max_axis routes gradient to the first maximal index.
Var max_axis(Var a, std::size_t axis);
Var sum(Var a);
Var mean(Var a);
Var sum_axis(Var a, std::size_t axis);
Var mean_axis(Var a, std::size_t axis);
Var l2_norm(Var a);
Var l2_norm_rows(Var a);

Var concat(std::span<const Var> parts, std::size_t axis);
Var select_cols(Var a, std::span<const std::size_t> cols);
Var reshape(Var a, Shape shape);

}  // namespace advbench
