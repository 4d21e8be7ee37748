#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "mgf/ad/tensor.hpp"

namespace mgf::ad {

enum class Op : std::uint8_t {
  kLeaf,
  kMatMul,
  kTranspose,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddScalar,
  kAddRow,          // [n,m] + [1,m]
  kSumRows,         // [n,m] -> [1,m]
  kBroadcastRows,   // [1,m] -> [n,m]
  kBroadcastScalar, // [] -> any shape
  kSum,
  kMean,
  kTanh,
  kRelu,
  kLeakyRelu,
  kSigmoid,
  kSquare,
  kSqrt,
  kStepMask,        // x > 0 ? 1 : slope, no gradient
  kSliceCols,
  kPadCols,
  kRowNorm,         // [n,m] -> [n,1]
  kSoftmaxXent,     // mean over rows of -sum(target * log_softmax(logits))
  kSoftplus,
};

std::string_view op_name(Op op);

enum class LeafKind : std::uint8_t { kNone, kParameter, kInput, kConstant };

class Graph;

// Handle to one node of a Graph. Cheap to copy; only valid while the graph lives.
class Var {
 public:
  Var() = default;

  Graph* graph() const { return graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Graph;
  Var(Graph* g, int id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  int id_ = -1;
};

struct Node {
  Op op = Op::kLeaf;
  LeafKind leaf = LeafKind::kNone;
  int a = -1;
  int b = -1;
  double attr = 0.0;
  std::size_t lo = 0;
  std::size_t hi = 0;
  Shape aux;  // target shape for broadcasts
  Tensor value;
};

// Define-by-run tape. Every op evaluates eagerly when recorded; forward()
// replays the whole tape after leaves are rebound with set_leaf().
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var parameter(Tensor value);
  Var input(Tensor value);
  Var constant(Tensor value);

  // Rebinds a leaf. The graph is stale until forward() runs again.
  void set_leaf(Var leaf, Tensor value);
  void forward();
  bool stale() const { return stale_; }

  std::size_t size() const { return nodes_.size(); }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  const Tensor& value(Var v) const;

  // Reverse sweep from a scalar output. Returns one gradient per entry of
  // `wrt`; leaves with no path to the output get zeros.
  std::vector<Tensor> backward(Var output, std::span<const Var> wrt) const;
  Tensor backward(Var output, Var wrt) const;

  // Records d(output)/d(input) as new nodes of this graph, so the result can
  // itself be differentiated. Throws UsageError naming the first op on the
  // path that has no differentiable backward.
  Var input_gradient(Var output, Var input);

  // Used by the op free functions.
  Var record(Node node);

 private:
  Var leaf(Tensor value, LeafKind kind);
  Var wrap(int id) { return Var(this, id); }
  void check_fresh(std::string_view what) const;

  std::vector<Node> nodes_;
  bool stale_ = false;
};

Var matmul(Var a, Var b);
Var transpose(Var a);
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var add_row(Var x, Var row);
Var sum_rows(Var a);
Var broadcast_rows(Var row, std::size_t n);
Var broadcast_scalar(Var s, Shape shape);
Var sum(Var a);
Var mean(Var a);
Var tanh(Var a);
Var relu(Var a);
Var leaky_relu(Var a, double slope = 0.2);
Var sigmoid(Var a);
Var square(Var a);
Var sqrt(Var a);
Var step_mask(Var a, double slope);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var pad_cols(Var a, std::size_t begin, std::size_t total);
Var row_norm(Var a);
// `target` rows are probability vectors and receive no gradient.
Var softmax_cross_entropy(Var logits, Var target);
Var softplus(Var a);

}  // namespace mgf::ad
