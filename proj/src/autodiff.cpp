#include "polyglot/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace polyglot::ad {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Parameter: return "parameter";
    case OpKind::MatMul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::Tanh: return "tanh";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::SoftmaxRows: return "softmax_rows";
    case OpKind::LogSoftmaxRows: return "log_softmax_rows";
    case OpKind::ConcatCols: return "concat_cols";
    case OpKind::ConcatRows: return "concat_rows";
    case OpKind::Slice: return "slice";
    case OpKind::MeanRows: return "mean_rows";
    case OpKind::Embedding: return "embedding";
    case OpKind::Conv1d: return "conv1d";
    case OpKind::Sum: return "sum";
    case OpKind::Pick: return "pick";
    case OpKind::Transpose: return "transpose";
    case OpKind::GradReverse: return "grad_reverse";
    case OpKind::Precomputed: return "precomputed";
  }
  return "?";
}

const Tensor& Var::value() const { return graph->value(*this); }

namespace {

[[noreturn]] void mismatch(OpKind kind, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op_name(kind)) + ": incompatible shapes " +
                   shape_string(a.shape()) + " and " + shape_string(b.shape()));
}

Graph& graph_of(Var a, Var b) {
  if (a.graph != b.graph || a.graph == nullptr) {
    throw std::invalid_argument("operands belong to different graphs");
  }
  return *a.graph;
}

Tensor matrix_like(std::size_t rows, std::size_t cols) {
  return Tensor(Shape{rows, cols}, 0.0);
}

// out += a · b  (a: m×k, b: k×n)
void gemm_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = po + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

// out += g · bᵀ  (g: m×n, b: k×n -> m×k)
void gemm_nt_acc(const Tensor& g, const Tensor& b, Tensor& out) {
  const std::size_t m = g.rows(), n = g.cols(), k = b.rows();
  const double* pg = g.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = pg + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = pb + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
      po[i * k + p] += s;
    }
  }
}

// out += aᵀ · g  (a: m×k, g: m×n -> k×n)
void gemm_tn_acc(const Tensor& a, const Tensor& g, Tensor& out) {
  const std::size_t m = a.rows(), k = a.cols(), n = g.cols();
  const double* pa = a.data().data();
  const double* pg = g.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = pg + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      double* orow = po + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * grow[j];
    }
  }
}

bool same_matrix_shape(const Tensor& a, const Tensor& b) {
  return a.rows() == b.rows() && a.cols() == b.cols();
}

}  // namespace

std::size_t Graph::checked(Var v) const {
  if (v.graph != this || v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw std::invalid_argument("variable does not belong to this graph");
  }
  return static_cast<std::size_t>(v.id);
}

Var Graph::push(OpKind kind, std::vector<int> inputs, Tensor value) {
  if (!value.all_finite()) {
    throw std::domain_error(std::string("non-finite value produced by ") + op_name(kind));
  }
  Node n;
  n.kind = kind;
  n.inputs = std::move(inputs);
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Graph::constant(Tensor value) { return push(OpKind::Leaf, {}, std::move(value)); }

Var Graph::parameter(const std::string& name, const Tensor& value) {
  if (auto it = params_.find(name); it != params_.end()) {
    return Var{this, it->second};
  }
  Var v = push(OpKind::Parameter, {}, value);
  params_.emplace(name, v.id);
  return v;
}

GradientMap Graph::backward(Var loss) {
  const std::size_t root = checked(loss);
  if (nodes_[root].value.size() != 1) {
    throw ShapeError("backward requires a scalar loss, got " +
                     shape_string(nodes_[root].value.shape()));
  }
  if (!requires_grad_) {
    throw std::logic_error("backward on a graph built without gradients");
  }
  for (auto& n : nodes_) n.grad = Tensor();
  nodes_[root].grad = Tensor(nodes_[root].value.shape(), 1.0);
  for (std::size_t i = root + 1; i-- > 0;) {
    if (nodes_[i].grad.size() == 0) continue;
    backward_node(i);
  }
  GradientMap out;
  for (const auto& [name, id] : params_) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    out.emplace(name, n.grad.size() ? n.grad : Tensor(n.value.shape(), 0.0));
  }
  return out;
}

void Graph::backward_node(std::size_t i) {
  Node& n = nodes_[i];
  const Tensor& g = n.grad;
  auto grad_of = [&](std::size_t input_slot) -> Tensor& {
    Node& in = nodes_[static_cast<std::size_t>(n.inputs[input_slot])];
    if (in.grad.size() == 0) in.grad = Tensor(in.value.shape(), 0.0);
    return in.grad;
  };
  auto value_of = [&](std::size_t input_slot) -> const Tensor& {
    return nodes_[static_cast<std::size_t>(n.inputs[input_slot])].value;
  };

  switch (n.kind) {
    case OpKind::Leaf:
    case OpKind::Parameter:
      break;
    case OpKind::MatMul: {
      gemm_nt_acc(g, value_of(1), grad_of(0));
      gemm_tn_acc(value_of(0), g, grad_of(1));
      break;
    }
    case OpKind::Add:
    case OpKind::Sub: {
      const double sign = n.kind == OpKind::Add ? 1.0 : -1.0;
      Tensor& ga = grad_of(0);
      for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
      Tensor& gb = grad_of(1);
      if (gb.size() == g.size()) {
        for (std::size_t k = 0; k < g.size(); ++k) gb[k] += sign * g[k];
      } else {
        const std::size_t cols = g.cols();
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < cols; ++c) gb[c] += sign * g[r * cols + c];
      }
      break;
    }
    case OpKind::Mul: {
      const Tensor& a = value_of(0);
      const Tensor& b = value_of(1);
      Tensor& ga = grad_of(0);
      for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * b[k];
      Tensor& gb = grad_of(1);
      for (std::size_t k = 0; k < g.size(); ++k) gb[k] += g[k] * a[k];
      break;
    }
    case OpKind::Scale: {
      Tensor& ga = grad_of(0);
      for (std::size_t k = 0; k < g.size(); ++k) ga[k] += n.scalar * g[k];
      break;
    }
    case OpKind::Tanh: {
      Tensor& ga = grad_of(0);
      for (std::size_t k = 0; k < g.size(); ++k) {
        const double y = n.value[k];
        ga[k] += g[k] * (1.0 - y * y);
      }
      break;
    }
    case OpKind::Sigmoid: {
      Tensor& ga = grad_of(0);
      for (std::size_t k = 0; k < g.size(); ++k) {
        const double y = n.value[k];
        ga[k] += g[k] * y * (1.0 - y);
      }
      break;
    }
    case OpKind::SoftmaxRows: {
      Tensor& ga = grad_of(0);
      const std::size_t cols = g.cols();
      for (std::size_t r = 0; r < g.rows(); ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * n.value[r * cols + c];
        for (std::size_t c = 0; c < cols; ++c) {
          const std::size_t k = r * cols + c;
          ga[k] += n.value[k] * (g[k] - dot);
        }
      }
      break;
    }
    case OpKind::LogSoftmaxRows: {
      Tensor& ga = grad_of(0);
      const std::size_t cols = g.cols();
      for (std::size_t r = 0; r < g.rows(); ++r) {
        double total = 0.0;
        for (std::size_t c = 0; c < cols; ++c) total += g[r * cols + c];
        for (std::size_t c = 0; c < cols; ++c) {
          const std::size_t k = r * cols + c;
          ga[k] += g[k] - std::exp(n.value[k]) * total;
        }
      }
      break;
    }
    case OpKind::ConcatCols: {
      const std::size_t rows = g.rows(), cols = g.cols();
      std::size_t offset = 0;
      for (std::size_t s = 0; s < n.inputs.size(); ++s) {
        Tensor& gi = grad_of(s);
        const std::size_t w = gi.cols();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < w; ++c) gi[r * w + c] += g[r * cols + offset + c];
        offset += w;
      }
      break;
    }
    case OpKind::ConcatRows: {
      std::size_t offset = 0;
      for (std::size_t s = 0; s < n.inputs.size(); ++s) {
        Tensor& gi = grad_of(s);
        for (std::size_t k = 0; k < gi.size(); ++k) gi[k] += g[offset + k];
        offset += gi.size();
      }
      break;
    }
    case OpKind::Slice: {
      Tensor& ga = grad_of(0);
      const std::size_t r0 = n.indices[0], c0 = n.indices[2];
      const std::size_t src_cols = ga.cols();
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c)
          ga[(r0 + r) * src_cols + c0 + c] += g[r * g.cols() + c];
      break;
    }
    case OpKind::MeanRows: {
      Tensor& ga = grad_of(0);
      const std::size_t rows = ga.rows(), cols = ga.cols();
      const double inv = 1.0 / static_cast<double>(rows);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += g[c] * inv;
      break;
    }
    case OpKind::Embedding: {
      Tensor& gt = grad_of(0);
      const std::size_t cols = gt.cols();
      for (std::size_t r = 0; r < n.indices.size(); ++r)
        for (std::size_t c = 0; c < cols; ++c) gt[n.indices[r] * cols + c] += g[r * cols + c];
      break;
    }
    case OpKind::Conv1d: {
      const Tensor& sig = value_of(0);
      const Tensor& filt = value_of(1);
      Tensor& gs = grad_of(0);
      Tensor& gf = grad_of(1);
      const std::size_t len = sig.size(), channels = filt.rows(), width = filt.cols();
      const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(width / 2);
      for (std::size_t t = 0; t < len; ++t) {
        for (std::size_t c = 0; c < channels; ++c) {
          const double go = g[t * channels + c];
          for (std::size_t k = 0; k < width; ++k) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) - half;
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
            gf[c * width + k] += go * sig[static_cast<std::size_t>(src)];
            gs[static_cast<std::size_t>(src)] += go * filt[c * width + k];
          }
        }
      }
      break;
    }
    case OpKind::Sum: {
      Tensor& ga = grad_of(0);
      for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += g[0];
      break;
    }
    case OpKind::Pick: {
      Tensor& ga = grad_of(0);
      const std::size_t cols = ga.cols();
      for (std::size_t r = 0; r < n.indices.size(); ++r) ga[r * cols + n.indices[r]] += g[r];
      break;
    }
    case OpKind::Transpose: {
      Tensor& ga = grad_of(0);
      const std::size_t rows = g.rows(), cols = g.cols();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) ga[c * rows + r] += g[r * cols + c];
      break;
    }
    case OpKind::GradReverse: {
      Tensor& ga = grad_of(0);
      for (std::size_t k = 0; k < g.size(); ++k) ga[k] += -n.scalar * g[k];
      break;
    }
    case OpKind::Precomputed: {
      Tensor& ga = grad_of(0);
      for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += g[0] * n.saved[k];
      break;
    }
  }
}

Var matmul(Var a, Var b) {
  Graph& gr = graph_of(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.cols() != y.rows()) mismatch(OpKind::MatMul, x, y);
  Tensor out = matrix_like(x.rows(), y.cols());
  gemm_acc(x, y, out);
  return gr.push(OpKind::MatMul, {a.id, b.id}, std::move(out));
}

namespace {

Var add_sub(Var a, Var b, OpKind kind) {
  Graph& gr = graph_of(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const double sign = kind == OpKind::Add ? 1.0 : -1.0;
  Tensor out = matrix_like(x.rows(), x.cols());
  if (same_matrix_shape(x, y)) {
    for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[k] + sign * y[k];
  } else if (y.rows() == 1 && y.cols() == x.cols()) {
    const std::size_t cols = x.cols();
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t c = 0; c < cols; ++c)
        out[r * cols + c] = x[r * cols + c] + sign * y[c];
  } else {
    mismatch(kind, x, y);
  }
  return gr.push(kind, {a.id, b.id}, std::move(out));
}

template <typename F>
Var unary(Var a, OpKind kind, F f) {
  const Tensor& x = a.value();
  Tensor out = matrix_like(x.rows(), x.cols());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = f(x[k]);
  return a.graph->push(kind, {a.id}, std::move(out));
}

}  // namespace

Var add(Var a, Var b) { return add_sub(a, b, OpKind::Add); }
Var sub(Var a, Var b) { return add_sub(a, b, OpKind::Sub); }

Var mul(Var a, Var b) {
  Graph& gr = graph_of(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (!same_matrix_shape(x, y)) mismatch(OpKind::Mul, x, y);
  Tensor out = matrix_like(x.rows(), x.cols());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[k] * y[k];
  return gr.push(OpKind::Mul, {a.id, b.id}, std::move(out));
}

Var scale(Var a, double factor) {
  Var v = unary(a, OpKind::Scale, [factor](double x) { return factor * x; });
  a.graph->node(v).scalar = factor;
  return v;
}

Var tanh(Var a) {
  return unary(a, OpKind::Tanh, [](double x) { return std::tanh(x); });
}

Var sigmoid(Var a) {
  return unary(a, OpKind::Sigmoid, [](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
}

Var softmax_rows(Var a) {
  const Tensor& x = a.value();
  Tensor out = matrix_like(x.rows(), x.cols());
  const std::size_t cols = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row_span(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      out[r * cols + c] = std::exp(in[c] - mx);
      total += out[r * cols + c];
    }
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] /= total;
  }
  return a.graph->push(OpKind::SoftmaxRows, {a.id}, std::move(out));
}

Var log_softmax_rows(Var a) {
  const Tensor& x = a.value();
  Tensor out = matrix_like(x.rows(), x.cols());
  const std::size_t cols = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row_span(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (double v : in) total += std::exp(v - mx);
    const double lse = mx + std::log(total);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = in[c] - lse;
  }
  return a.graph->push(OpKind::LogSoftmaxRows, {a.id}, std::move(out));
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Graph* gr = parts.front().graph;
  const std::size_t rows = parts.front().value().rows();
  std::size_t cols = 0;
  std::vector<int> ids;
  for (Var p : parts) {
    if (p.graph != gr) throw std::invalid_argument("operands belong to different graphs");
    if (p.value().rows() != rows) mismatch(OpKind::ConcatCols, parts.front().value(), p.value());
    cols += p.value().cols();
    ids.push_back(p.id);
  }
  Tensor out = matrix_like(rows, cols);
  std::size_t offset = 0;
  for (Var p : parts) {
    const Tensor& x = p.value();
    const std::size_t w = x.cols();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < w; ++c) out[r * cols + offset + c] = x[r * w + c];
    offset += w;
  }
  return gr->push(OpKind::ConcatCols, std::move(ids), std::move(out));
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Graph* gr = parts.front().graph;
  const std::size_t cols = parts.front().value().cols();
  std::size_t rows = 0;
  std::vector<int> ids;
  for (Var p : parts) {
    if (p.graph != gr) throw std::invalid_argument("operands belong to different graphs");
    if (p.value().cols() != cols) mismatch(OpKind::ConcatRows, parts.front().value(), p.value());
    rows += p.value().rows();
    ids.push_back(p.id);
  }
  std::vector<double> data;
  data.reserve(rows * cols);
  for (Var p : parts) {
    auto d = p.value().data();
    data.insert(data.end(), d.begin(), d.end());
  }
  return gr->push(OpKind::ConcatRows, std::move(ids), Tensor(Shape{rows, cols}, std::move(data)));
}

Var slice(Var a, std::size_t row_begin, std::size_t row_end, std::size_t col_begin,
          std::size_t col_end) {
  const Tensor& x = a.value();
  if (row_begin >= row_end || row_end > x.rows() || col_begin >= col_end || col_end > x.cols()) {
    throw ShapeError("slice: range [" + std::to_string(row_begin) + "," + std::to_string(row_end) +
                     ")x[" + std::to_string(col_begin) + "," + std::to_string(col_end) +
                     ") outside " + shape_string(x.shape()));
  }
  const std::size_t rows = row_end - row_begin, cols = col_end - col_begin;
  Tensor out = matrix_like(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x(row_begin + r, col_begin + c);
  Var v = a.graph->push(OpKind::Slice, {a.id}, std::move(out));
  a.graph->node(v).indices = {row_begin, row_end, col_begin, col_end};
  return v;
}

Var slice_row(Var a, std::size_t row) { return slice(a, row, row + 1, 0, a.value().cols()); }

Var slice_cols(Var a, std::size_t col_begin, std::size_t col_end) {
  return slice(a, 0, a.value().rows(), col_begin, col_end);
}

Var mean_rows(Var a) {
  const Tensor& x = a.value();
  const std::size_t rows = x.rows(), cols = x.cols();
  Tensor out = matrix_like(1, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c] += x[r * cols + c];
  for (std::size_t c = 0; c < cols; ++c) out[c] /= static_cast<double>(rows);
  return a.graph->push(OpKind::MeanRows, {a.id}, std::move(out));
}

Var embedding(Var table, std::vector<std::size_t> ids) {
  const Tensor& t = table.value();
  const std::size_t cols = t.cols();
  Tensor out = matrix_like(ids.size(), cols);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= t.rows()) {
      throw ShapeError("embedding: id " + std::to_string(ids[r]) + " outside table " +
                       shape_string(t.shape()));
    }
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = t(ids[r], c);
  }
  Var v = table.graph->push(OpKind::Embedding, {table.id}, std::move(out));
  table.graph->node(v).indices = std::move(ids);
  return v;
}

Var conv1d(Var signal, Var filters) {
  Graph& gr = graph_of(signal, filters);
  const Tensor& sig = signal.value();
  const Tensor& filt = filters.value();
  if (sig.rows() != 1) mismatch(OpKind::Conv1d, sig, filt);
  const std::size_t len = sig.size(), channels = filt.rows(), width = filt.cols();
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(width / 2);
  Tensor out = matrix_like(len, channels);
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t c = 0; c < channels; ++c) {
      double s = 0.0;
      for (std::size_t k = 0; k < width; ++k) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) - half;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
        s += filt[c * width + k] * sig[static_cast<std::size_t>(src)];
      }
      out[t * channels + c] = s;
    }
  }
  return gr.push(OpKind::Conv1d, {signal.id, filters.id}, std::move(out));
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.graph->push(OpKind::Sum, {a.id}, Tensor::scalar(s));
}

Var pick(Var a, std::vector<std::size_t> cols) {
  const Tensor& x = a.value();
  if (cols.size() != x.rows()) {
    throw ShapeError("pick: " + std::to_string(cols.size()) + " indices for " +
                     shape_string(x.shape()));
  }
  Tensor out = matrix_like(cols.size(), 1);
  for (std::size_t r = 0; r < cols.size(); ++r) {
    if (cols[r] >= x.cols()) {
      throw ShapeError("pick: column " + std::to_string(cols[r]) + " outside " +
                       shape_string(x.shape()));
    }
    out[r] = x(r, cols[r]);
  }
  Var v = a.graph->push(OpKind::Pick, {a.id}, std::move(out));
  a.graph->node(v).indices = std::move(cols);
  return v;
}

Var transpose(Var a) {
  const Tensor& x = a.value();
  const std::size_t rows = x.rows(), cols = x.cols();
  Tensor out = matrix_like(cols, rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = x[r * cols + c];
  return a.graph->push(OpKind::Transpose, {a.id}, std::move(out));
}

Var grad_reverse(Var a, double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("grad_reverse: lambda must be >= 0");
  Var v = a.graph->push(OpKind::GradReverse, {a.id}, a.value());
  a.graph->node(v).scalar = lambda;
  return v;
}

Var precomputed(Var input, double value, Tensor dvalue_dinput) {
  if (dvalue_dinput.size() != input.value().size()) {
    mismatch(OpKind::Precomputed, input.value(), dvalue_dinput);
  }
  Var v = input.graph->push(OpKind::Precomputed, {input.id}, Tensor::scalar(value));
  input.graph->node(v).saved = std::move(dvalue_dinput);
  return v;
}

}  // namespace polyglot::ad
