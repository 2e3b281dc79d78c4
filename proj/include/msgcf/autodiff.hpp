#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "msgcf/tensor.hpp"

namespace msgcf::ad {

using NodeId = std::size_t;

enum class OpKind {
  constant,
  parameter,
  matmul,
  relu,
  softplus,
  concat_cols,
  hadamard,
  conv2d,
  maxpool2,
  linear,
  softmax_cross_entropy,
  add,
  scale,
  sum,
  reshape,
  select_rows,
  gather_rows,
  stack_rows,
  channel_mean,
  pairwise_abs_diff,
  zero_diagonal,
  renormalize,
};

const char* to_string(OpKind kind);

class Tape;

/// Gradient buffers handed to a node's backward rule. Buffers are allocated
/// lazily and only for nodes that require gradients.
class GradSink {
 public:
  GradSink(const Tape& tape, std::vector<std::optional<Tensor>>& grads) : tape_(tape), grads_(grads) {}
  bool wants(NodeId id) const;
  Tensor& at(NodeId id);

 private:
  const Tape& tape_;
  std::vector<std::optional<Tensor>>& grads_;
};

using BackwardFn = std::function<void(const Tape&, const Tensor& upstream, GradSink&)>;

struct Node {
  OpKind kind;
  std::vector<NodeId> inputs;
  Tensor value;
  bool requires_grad = false;
  BackwardFn backward;  // empty for leaves and for nodes without grad-requiring inputs
};

/// Handle to a node on a tape. Cheap to copy; only valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  NodeId id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

/// Ordered record of operations. Nodes are appended in evaluation order, so
/// every node's inputs precede it and a reverse sweep is a valid
/// topological traversal.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(Tensor value);

  /// Appends an op node. `backward` is dropped when no input requires grad.
  Var record(OpKind kind, std::vector<NodeId> inputs, Tensor value, BackwardFn backward);

  const Node& node(NodeId id) const { return nodes_[id]; }
  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<NodeId>& parameters() const { return parameters_; }

 private:
  std::deque<Node> nodes_;
  std::vector<NodeId> parameters_;
};

/// Parameter node id -> gradient of identical shape.
using GradientMap = std::map<NodeId, Tensor>;

/// Reverse sweep from a scalar root. Every registered parameter receives an
/// entry (zeros when unreachable); no other node does.
GradientMap backward(const Tape& tape, Var root);

// Differentiable ops. All operands must live on the same tape.
Var matmul(Var a, Var b);
Var relu(Var x);
Var softplus(Var x);
Var concat_cols(Var a, Var b);
Var hadamard(Var a, Var b);
/// input [c_in x h x w], kernels [c_out x c_in x kh x kw], bias [c_out].
/// Valid cross-correlation, stride 1.
Var conv2d(Var input, Var kernels, Var bias);
/// 2x2 window, stride 2, trailing odd row/column dropped. Ties route the
/// gradient to the first element in row-major window order.
Var maxpool2(Var input);
Var linear(Var x, Var weight, Var bias);
/// Mean over rows of -log softmax(logits)[label].
Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels);

Var add(Var a, Var b);
Var scale(Var a, double alpha);
Var sum(Var a);
Var reshape(Var a, Shape shape);
/// Rows [begin, end) of a matrix.
Var select_rows(Var a, std::size_t begin, std::size_t end);
Var gather_rows(Var a, std::span<const std::size_t> rows);
/// Stacks equal-length vectors into an [n x f] matrix.
Var stack_rows(std::span<const Var> rows);
/// [c x h x w] -> [c], spatial mean per channel.
Var channel_mean(Var a);

// Forward-only helpers sharing the op kernels.
Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias);
Tensor softmax_rows(const Tensor& logits);
double softplus_value(double x);
double sigmoid_value(double x);

}  // namespace msgcf::ad
