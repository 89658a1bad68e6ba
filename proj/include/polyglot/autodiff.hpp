#pragma once

// Define-by-run reverse-mode differentiation over dense 2-D tensors.
//
// Every op evaluates eagerly and appends a node to its Graph. Nodes only ever
// reference earlier nodes, so the node vector is already a topological order
// and backward() is a single reverse sweep.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "polyglot/tensor.hpp"

namespace polyglot::ad {

enum class OpKind : std::uint8_t {
  Leaf,
  Parameter,
  MatMul,
  Add,
  Sub,
  Mul,
  Scale,
  Tanh,
  Sigmoid,
  SoftmaxRows,
  LogSoftmaxRows,
  ConcatCols,
  ConcatRows,
  Slice,
  MeanRows,
  Embedding,
  Conv1d,
  Sum,
  Pick,
  Transpose,
  GradReverse,
  Precomputed,
};

const char* op_name(OpKind kind);

class Graph;

// Handle to a node in a graph. Cheap to copy; valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  const Tensor& value() const;
  bool valid() const { return graph != nullptr && id >= 0; }
};

using GradientMap = std::map<std::string, Tensor>;

class Graph {
 public:
  explicit Graph(bool requires_grad = true) : requires_grad_(requires_grad) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  // Registers a named trainable leaf. Registering the same name twice returns
  // the original node.
  Var parameter(const std::string& name, const Tensor& value);

  const Tensor& value(Var v) const { return nodes_[checked(v)].value; }
  std::size_t size() const { return nodes_.size(); }
  bool requires_grad() const { return requires_grad_; }
  const std::map<std::string, int>& parameters() const { return params_; }

  // Gradient of a scalar node w.r.t. every registered parameter. Parameters
  // the loss does not reach receive zero tensors of the parameter's shape.
  GradientMap backward(Var loss);

  // Appends a node; used by the op free functions below.
  Var push(OpKind kind, std::vector<int> inputs, Tensor value);
  struct Node {
    OpKind kind = OpKind::Leaf;
    std::vector<int> inputs;
    Tensor value;
    Tensor grad;
    double scalar = 0.0;
    std::vector<std::size_t> indices;
    Tensor saved;
  };
  Node& node(Var v) { return nodes_[checked(v)]; }
  const Node& node(Var v) const { return nodes_[checked(v)]; }

 private:
  std::size_t checked(Var v) const;
  void backward_node(std::size_t i);

  bool requires_grad_;
  std::deque<Node> nodes_;
  std::map<std::string, int> params_;
};

// Matrix product of an m×k and a k×n operand.
Var matmul(Var a, Var b);
// Element-wise sum. `b` may be a single row broadcast over the rows of `a`.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var tanh(Var a);
Var sigmoid(Var a);
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice(Var a, std::size_t row_begin, std::size_t row_end, std::size_t col_begin,
          std::size_t col_end);
Var slice_row(Var a, std::size_t row);
Var slice_cols(Var a, std::size_t col_begin, std::size_t col_end);
// Mean over rows (the time axis): T×D -> 1×D.
Var mean_rows(Var a);
// Row lookup into a V×E table.
Var embedding(Var table, std::vector<std::size_t> ids);
// Same-padded 1-D convolution of a 1×T signal with C filters of width K,
// producing T×C. Filters are centred at tap K/2.
Var conv1d(Var signal, Var filters);
Var sum(Var a);
// Gathers a[i, cols[i]] for each row i, producing rows×1.
Var pick(Var a, std::vector<std::size_t> cols);
Var transpose(Var a);
// Identity forward; backward multiplies the incoming gradient by -lambda.
Var grad_reverse(Var a, double lambda);
// Scalar node with an externally computed value and gradient w.r.t. `input`.
Var precomputed(Var input, double value, Tensor dvalue_dinput);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

}  // namespace polyglot::ad
