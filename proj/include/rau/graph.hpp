#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "rau/tensor.hpp"

namespace rau {

/// A trainable tensor with its gradient accumulator. Gradients written by
/// Graph::backward are added, never assigned, so a parameter used several
/// times in one graph (or across several graphs) sums its contributions.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor value)
      : name(std::move(name)), value(std::move(value)), grad(Tensor::zeros_like(this->value)) {}

  void zero_grad() { grad.fill(0.0); }

  std::string name;
  Tensor value;
  Tensor grad;
};

class Graph;

/// Handle to a node in a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph& graph() const { return *graph_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Append-only tape of operations. Nodes are recorded in evaluation order,
/// so every node's inputs precede it; backward walks the tape once in
/// reverse. With recording disabled only forward values are kept.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const noexcept { return record_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Leaf holding a value that receives no gradient.
  Var constant(Tensor value);
  /// Leaf bound to a parameter; binding the same parameter twice returns
  /// the same node.
  Var parameter(Parameter& p);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  /// Gradient of the last backward's loss w.r.t. node `id`, zero-filled if
  /// nothing reached it.
  const Tensor& grad(std::size_t id);
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  /// Reverse sweep from a single-element loss. Parameter gradients are
  /// accumulated into Parameter::grad.
  void backward(Var loss);

  /// Records an op. `backward` may be empty when no input needs gradients.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  /// Gradient slot of node `id`, allocated on first use.
  Tensor& grad_slot(std::size_t id);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  bool record_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> bound_;
};

inline const Tensor& Var::value() const { return graph_->value(id_); }

/// Differentiable operations. Matrices are row-major; in batched use each
/// column is one example.
namespace ad {

enum class UnaryKind { Tanh, Exp, Log, Negate, AddScalar, MulScalar, Sigmoid };

Var elementwise(UnaryKind kind, Var x, double scalar = 0.0);
Var tanh(Var x);
Var exp(Var x);
Var log(Var x);
Var negate(Var x);
Var sigmoid(Var x);
Var add_scalar(Var x, double c);
Var mul_scalar(Var x, double c);

Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);

Var matmul(Var a, Var b);
/// A x + b. With `broadcast`, b is a column vector added to every column
/// of A x; otherwise b must have the shape of A x.
Var linear_combine(Var a, Var x, Var b, bool broadcast);
/// Adds column vector b to every column of x.
Var add_column(Var x, Var b);

/// Per-column softmax (a rank-1 input is a single column).
Var softmax(Var scores);
/// -y^T log(max(a, 1e-12)) for probability vector a and one-hot y.
Var cross_entropy(Var a, Var y);
/// Sum over columns j of -log(max(a[labels[j], j], 1e-12)).
Var cross_entropy_labels(Var a, std::span<const std::size_t> labels);

/// Sum of all entries, as a single-element tensor.
Var sum(Var x);

/// Each column of x[r x b] repeated `times` times: result r x (times*b).
Var repeat_cols(Var x, std::size_t times);
Var reshape(Var x, Shape shape);
Var transpose(Var x);
/// g[s x (l*b)] made of b blocks of l columns; w[l x b]. Result s x b with
/// column j = block j of g times w[:, j].
Var block_weighted_sum(Var g, Var w, std::size_t l);

/// Rows of table[v x d] selected by ids, laid out as columns: d x ids.size().
Var embedding_lookup(Var table, std::span<const std::size_t> ids);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
/// Columns of x in the given order.
Var select_cols(Var x, std::span<const std::size_t> cols);
/// Rows [begin, begin + count) of x.
Var slice_rows(Var x, std::size_t begin, std::size_t count);

/// LSTM gate nonlinearities. pre[4H x B] holds the stacked pre-activations
/// of the input, forget, output and candidate gates; c[H x B] is the
/// previous cell. Returns [h'; c'] as a 2H x B matrix with
/// c' = s(f) c + s(i) tanh(g) and h' = s(o) tanh(c').
Var lstm_pointwise(Var pre, Var c);

}  // namespace ad

}  // namespace rau
