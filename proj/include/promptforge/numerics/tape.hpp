#pragma once

#include "promptforge/numerics/tensor.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace promptforge::numerics {

// Handle to a node recorded on a Tape. Only meaningful for the tape that
// produced it.
struct Var {
  std::uint32_t id = 0;
};

enum class Op : std::uint8_t {
  Leaf,
  MatMul,
  MatMulTransposeB,
  Add,
  Sub,
  Mul,
  AddRow,
  Scale,
  AddScalar,
  Relu,
  Tanh,
  Sigmoid,
  Exp,
  Log,
  Abs,
  Sqrt,
  Square,
  Arcsin,
  L2NormalizeRows,
  Sum,
  Mean,
  RowSums,
  SoftmaxRows,
  LogSoftmaxRows,
  ScaleBy,
  GatherRows,
  ConcatRows,
  ConcatCols,
  SliceCols,
  StandardizeRows,
  TileCols,
};

std::string_view op_name(Op op);

// Largest magnitude fed to arcsin; keeps 1/sqrt(1-x^2) finite.
inline constexpr double kArcsinLimit = 1.0 - 1e-7;

class Gradients;

// Define-by-run reverse-mode tape. Nodes are appended in evaluation order,
// so index order is a topological order. Values are computed eagerly and any
// non-finite result raises NumericFault naming the offending node.
class Tape {
 public:
  Tape() = default;

  Var leaf(Tensor value, bool requires_grad = false);
  Var constant(Tensor value) { return leaf(std::move(value), false); }
  Var param(Tensor value) { return leaf(std::move(value), true); }
  // Constant leaf that refers to `value` without copying it; `value` must
  // outlive every use of this tape.
  Var constant_ref(const Tensor& value);

  Var matmul(Var a, Var b);
  Var matmul_transpose_b(Var a, Var b);  // a * b^T
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var add_row(Var a, Var row);  // broadcast a 1xC row over every row of a
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  Var relu(Var a);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var abs(Var a);
  Var sqrt(Var a);
  Var square(Var a);
  Var arcsin(Var a);  // forward clamps to [-1, 1]; the derivative uses kArcsinLimit
  Var l2_normalize_rows(Var a);
  Var sum(Var a);
  Var mean(Var a);
  Var row_sums(Var a);  // R x C -> R x 1
  Var softmax_rows(Var a);
  Var log_softmax_rows(Var a);
  Var scale_by(Var a, Var s);  // s is 1x1
  Var gather_rows(Var table, std::vector<std::size_t> ids);
  Var concat_rows(std::span<const Var> parts);
  Var concat_cols(std::span<const Var> parts);
  Var slice_cols(Var a, std::size_t start, std::size_t count);
  // Per row (x - mean) / sqrt(var + eps), population variance.
  Var standardize_rows(Var a, double eps);
  // R x C -> R x (C * reps), the whole row repeated reps times.
  Var tile_cols(Var a, std::size_t reps);

  // Convenience composites.
  Var dense(Var x, Var weight, Var bias) { return add_row(matmul(x, weight), bias); }
  Var rows_dot(Var a, Var b) { return row_sums(mul(a, b)); }

  const Tensor& value(Var v) const { return nodes_.at(v.id).get(); }
  double scalar(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  Op op(Var v) const { return nodes_.at(v.id).op; }
  std::size_t size() const noexcept { return nodes_.size(); }
  std::string node_label(Var v) const;

  // Reverse sweep from a scalar output. Each node is visited once, in
  // decreasing index order.
  Gradients backward(Var out) const;

  // Recomputes every node from the recorded leaf values and returns the
  // value of `out`.
  Tensor replay(Var out) const;

 private:
  struct Node {
    Op op = Op::Leaf;
    std::vector<std::uint32_t> inputs;
    Tensor value;
    bool requires_grad = false;
    double scalar = 0.0;
    std::size_t start = 0;
    std::size_t count = 0;
    std::vector<std::size_t> ids;
    const Tensor* external = nullptr;
    const Tensor& get() const { return external ? *external : value; }
  };

  static Node make_node(Op op, std::vector<std::uint32_t> inputs);
  Var push(Node node);
  Tensor compute(const Node& node, const std::vector<const Tensor*>& in) const;
  void accumulate_inputs(std::size_t index, const Tensor& grad, std::vector<Tensor>& grads) const;

  std::vector<Node> nodes_;
};

class Gradients {
 public:
  bool has(Var v) const { return v.id < grads_.size() && !grads_[v.id].empty(); }
  // Gradient w.r.t. v; a zero tensor of the node's shape if no path exists.
  Tensor of(Var v) const;

 private:
  friend class Tape;
  Gradients(const Tape* tape, std::vector<Tensor> grads) : tape_(tape), grads_(std::move(grads)) {}
  const Tape* tape_;
  std::vector<Tensor> grads_;
};

struct ValueAndGradients {
  double value = 0.0;
  std::vector<Tensor> gradients;  // one per requested leaf, same order
};

// Scalar output value plus exact reverse-mode gradients for each leaf.
ValueAndGradients evaluate_with_gradients(const Tape& tape, Var out, std::span<const Var> leaves);

}  // namespace promptforge::numerics
