#include "mgf/ad/graph.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "mgf/error.hpp"

namespace mgf::ad {
namespace {

[[noreturn]] void shape_fail(Op op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op_name(op)) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

[[noreturn]] void shape_fail(Op op, const Shape& a) {
  throw ShapeError(std::string(op_name(op)) + ": unsupported shape " + shape_str(a));
}

void require_rank2(Op op, const Tensor& t) {
  if (t.rank() != 2) shape_fail(op, t.shape());
}

template <typename F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

template <typename F>
Tensor zip(Op op, const Tensor& a, const Tensor& b, F f) {
  if (a.shape() != b.shape()) shape_fail(op, a.shape(), b.shape());
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_scalar(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

Tensor matmul_values(const Tensor& a, const Tensor& b) {
  require_rank2(Op::kMatMul, a);
  require_rank2(Op::kMatMul, b);
  if (a.cols() != b.rows()) shape_fail(Op::kMatMul, a.shape(), b.shape());
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Tensor out({n, m});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    double* orow = po + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = pb + p * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

// g * b^T without materialising the transpose.
Tensor matmul_nt(const Tensor& g, const Tensor& b) {
  const std::size_t n = g.rows(), m = g.cols(), k = b.rows();
  Tensor out({n, k});
  const double* pg = g.data().data();
  const double* pb = b.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) acc += pg[i * m + j] * pb[p * m + j];
      out.at(i, p) = acc;
    }
  }
  return out;
}

// a^T * g.
Tensor matmul_tn(const Tensor& a, const Tensor& g) {
  const std::size_t n = a.rows(), k = a.cols(), m = g.cols();
  Tensor out({k, m});
  const double* pa = a.data().data();
  const double* pg = g.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      double* orow = po + p * m;
      const double* grow = pg + i * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * grow[j];
    }
  }
  return out;
}

Tensor transpose_values(const Tensor& a) {
  require_rank2(Op::kTranspose, a);
  Tensor out({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
  return out;
}

Tensor sum_rows_values(const Tensor& a) {
  require_rank2(Op::kSumRows, a);
  Tensor out({1, a.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out[j] += a.at(i, j);
  return out;
}

Tensor broadcast_rows_values(const Tensor& row, std::size_t n) {
  if (row.rank() != 2 || row.rows() != 1) shape_fail(Op::kBroadcastRows, row.shape());
  Tensor out({n, row.cols()});
  for (std::size_t i = 0; i < n; ++i)
    std::copy(row.data().begin(), row.data().end(), out.row_span(i).begin());
  return out;
}

Tensor slice_cols_values(const Tensor& a, std::size_t lo, std::size_t hi) {
  require_rank2(Op::kSliceCols, a);
  if (lo >= hi || hi > a.cols()) shape_fail(Op::kSliceCols, a.shape());
  Tensor out({a.rows(), hi - lo});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = lo; j < hi; ++j) out.at(i, j - lo) = a.at(i, j);
  return out;
}

Tensor pad_cols_values(const Tensor& a, std::size_t lo, std::size_t total) {
  require_rank2(Op::kPadCols, a);
  if (lo + a.cols() > total) shape_fail(Op::kPadCols, a.shape());
  Tensor out({a.rows(), total});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out.at(i, lo + j) = a.at(i, j);
  return out;
}

Tensor softmax_rows(const Tensor& logits) {
  Tensor p(logits.shape());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto in = logits.row_span(i);
    auto out = p.row_span(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) z += (out[j] = std::exp(in[j] - mx));
    for (auto& v : out) v /= z;
  }
  return p;
}

Tensor evaluate(const Node& n, const Tensor* a, const Tensor* b) {
  switch (n.op) {
    case Op::kLeaf:
      return n.value;
    case Op::kMatMul:
      return matmul_values(*a, *b);
    case Op::kTranspose:
      return transpose_values(*a);
    case Op::kAdd:
      return zip(n.op, *a, *b, [](double x, double y) { return x + y; });
    case Op::kSub:
      return zip(n.op, *a, *b, [](double x, double y) { return x - y; });
    case Op::kMul:
      return zip(n.op, *a, *b, [](double x, double y) { return x * y; });
    case Op::kScale:
      return map(*a, [c = n.attr](double x) { return c * x; });
    case Op::kAddScalar:
      return map(*a, [c = n.attr](double x) { return x + c; });
    case Op::kAddRow: {
      require_rank2(n.op, *a);
      if (b->rank() != 2 || b->rows() != 1 || b->cols() != a->cols()) shape_fail(n.op, a->shape(), b->shape());
      Tensor out = *a;
      for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out.at(i, j) += (*b)[j];
      return out;
    }
    case Op::kSumRows:
      return sum_rows_values(*a);
    case Op::kBroadcastRows:
      return broadcast_rows_values(*a, n.lo);
    case Op::kBroadcastScalar:
      if (a->size() != 1) shape_fail(n.op, a->shape());
      return Tensor(n.aux, (*a)[0]);
    case Op::kSum: {
      double s = 0.0;
      for (double v : a->data()) s += v;
      return Tensor::scalar(s);
    }
    case Op::kMean: {
      if (a->size() == 0) shape_fail(n.op, a->shape());
      double s = 0.0;
      for (double v : a->data()) s += v;
      return Tensor::scalar(s / static_cast<double>(a->size()));
    }
    case Op::kTanh:
      return map(*a, [](double x) { return std::tanh(x); });
    case Op::kRelu:
      return map(*a, [](double x) { return x > 0.0 ? x : 0.0; });
    case Op::kLeakyRelu:
      return map(*a, [s = n.attr](double x) { return x > 0.0 ? x : s * x; });
    case Op::kSigmoid:
      return map(*a, sigmoid_scalar);
    case Op::kSquare:
      return map(*a, [](double x) { return x * x; });
    case Op::kSqrt:
      return map(*a, [](double x) { return std::sqrt(x); });
    case Op::kStepMask:
      return map(*a, [s = n.attr](double x) { return x > 0.0 ? 1.0 : s; });
    case Op::kSliceCols:
      return slice_cols_values(*a, n.lo, n.hi);
    case Op::kPadCols:
      return pad_cols_values(*a, n.lo, n.hi);
    case Op::kRowNorm: {
      require_rank2(n.op, *a);
      Tensor out({a->rows(), 1});
      for (std::size_t i = 0; i < a->rows(); ++i) {
        double s = 0.0;
        for (double v : a->row_span(i)) s += v * v;
        out[i] = std::sqrt(s);
      }
      return out;
    }
    case Op::kSoftmaxXent: {
      require_rank2(n.op, *a);
      if (a->shape() != b->shape()) shape_fail(n.op, a->shape(), b->shape());
      double total = 0.0;
      for (std::size_t i = 0; i < a->rows(); ++i) {
        auto in = a->row_span(i);
        const double mx = *std::max_element(in.begin(), in.end());
        double z = 0.0;
        for (double v : in) z += std::exp(v - mx);
        const double log_z = mx + std::log(z);
        auto t = b->row_span(i);
        for (std::size_t j = 0; j < in.size(); ++j) total -= t[j] * (in[j] - log_z);
      }
      return Tensor::scalar(total / static_cast<double>(a->rows()));
    }
    case Op::kSoftplus:
      return map(*a, softplus_scalar);
  }
  throw UsageError("unknown op");
}

void accumulate(std::optional<Tensor>& slot, Tensor g) {
  if (!slot) {
    slot = std::move(g);
    return;
  }
  auto dst = slot->data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kMatMul: return "matmul";
    case Op::kTranspose: return "transpose";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kAddScalar: return "add_scalar";
    case Op::kAddRow: return "add_row";
    case Op::kSumRows: return "sum_rows";
    case Op::kBroadcastRows: return "broadcast_rows";
    case Op::kBroadcastScalar: return "broadcast_scalar";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kTanh: return "tanh";
    case Op::kRelu: return "relu";
    case Op::kLeakyRelu: return "leaky_relu";
    case Op::kSigmoid: return "sigmoid";
    case Op::kSquare: return "square";
    case Op::kSqrt: return "sqrt";
    case Op::kStepMask: return "step_mask";
    case Op::kSliceCols: return "slice_cols";
    case Op::kPadCols: return "pad_cols";
    case Op::kRowNorm: return "row_norm";
    case Op::kSoftmaxXent: return "softmax_cross_entropy";
    case Op::kSoftplus: return "softplus";
  }
  return "?";
}

const Tensor& Var::value() const {
  if (!graph_) throw UsageError("value of an unbound Var");
  return graph_->value(*this);
}

Var Graph::leaf(Tensor value, LeafKind kind) {
  Node n;
  n.op = Op::kLeaf;
  n.leaf = kind;
  n.value = std::move(value);
  if (!n.value.all_finite()) throw NumericError("leaf: non-finite value bound");
  nodes_.push_back(std::move(n));
  return wrap(static_cast<int>(nodes_.size() - 1));
}

Var Graph::parameter(Tensor value) { return leaf(std::move(value), LeafKind::kParameter); }
Var Graph::input(Tensor value) { return leaf(std::move(value), LeafKind::kInput); }
Var Graph::constant(Tensor value) { return leaf(std::move(value), LeafKind::kConstant); }

void Graph::set_leaf(Var v, Tensor value) {
  if (v.graph() != this) throw UsageError("set_leaf: Var belongs to another graph");
  Node& n = nodes_[static_cast<std::size_t>(v.id())];
  if (n.op != Op::kLeaf) throw UsageError("set_leaf: node is not a leaf");
  if (n.value.shape() != value.shape()) {
    throw ShapeError("set_leaf: shape " + shape_str(value.shape()) + " does not match " + shape_str(n.value.shape()));
  }
  if (!value.all_finite()) throw NumericError("set_leaf: non-finite value bound");
  n.value = std::move(value);
  stale_ = true;
}

void Graph::forward() {
  for (auto& n : nodes_) {
    if (n.op == Op::kLeaf) continue;
    const Tensor* a = n.a >= 0 ? &nodes_[static_cast<std::size_t>(n.a)].value : nullptr;
    const Tensor* b = n.b >= 0 ? &nodes_[static_cast<std::size_t>(n.b)].value : nullptr;
    n.value = evaluate(n, a, b);
    if (!n.value.all_finite()) {
      throw NumericError(std::string(op_name(n.op)) + ": non-finite result (numeric overflow)");
    }
  }
  stale_ = false;
}

const Tensor& Graph::value(Var v) const {
  if (v.graph() != this) throw UsageError("value: Var belongs to another graph");
  return nodes_[static_cast<std::size_t>(v.id())].value;
}

void Graph::check_fresh(std::string_view what) const {
  if (stale_) throw UsageError(std::string(what) + ": leaves were rebound; run forward() first");
}

Var Graph::record(Node n) {
  check_fresh(op_name(n.op));
  const Tensor* a = n.a >= 0 ? &nodes_[static_cast<std::size_t>(n.a)].value : nullptr;
  const Tensor* b = n.b >= 0 ? &nodes_[static_cast<std::size_t>(n.b)].value : nullptr;
  n.value = evaluate(n, a, b);
  if (!n.value.all_finite()) {
    throw NumericError(std::string(op_name(n.op)) + ": non-finite result (numeric overflow)");
  }
  nodes_.push_back(std::move(n));
  return wrap(static_cast<int>(nodes_.size() - 1));
}

std::vector<Tensor> Graph::backward(Var output, std::span<const Var> wrt) const {
  check_fresh("backward");
  if (output.graph() != this) throw UsageError("backward: output belongs to another graph");
  const auto& out_node = nodes_[static_cast<std::size_t>(output.id())];
  if (out_node.value.size() != 1) {
    throw UsageError("backward: output must be scalar, got shape " + shape_str(out_node.value.shape()));
  }
  const std::size_t count = static_cast<std::size_t>(output.id()) + 1;

  // Only nodes downstream of a requested leaf need adjoints.
  std::vector<char> needed(count, 0);
  for (const auto& w : wrt) {
    if (w.graph() != this) throw UsageError("backward: wrt Var belongs to another graph");
    if (static_cast<std::size_t>(w.id()) < count) needed[static_cast<std::size_t>(w.id())] = 1;
  }
  for (std::size_t i = 0; i < count; ++i) {
    const auto& n = nodes_[i];
    if (n.op == Op::kLeaf || n.op == Op::kStepMask) continue;
    if ((n.a >= 0 && needed[static_cast<std::size_t>(n.a)]) ||
        (n.op != Op::kSoftmaxXent && n.b >= 0 && needed[static_cast<std::size_t>(n.b)])) {
      needed[i] = 1;
    }
  }

  std::vector<std::optional<Tensor>> adj(count);
  adj[count - 1] = Tensor(out_node.value.shape(), 1.0);

  for (std::size_t idx = count; idx-- > 0;) {
    const Node& n = nodes_[idx];
    if (!adj[idx] || n.op == Op::kLeaf || !needed[idx]) continue;
    const Tensor& g = *adj[idx];
    const bool need_a = n.a >= 0 && needed[static_cast<std::size_t>(n.a)];
    const bool need_b = n.b >= 0 && needed[static_cast<std::size_t>(n.b)];
    const Tensor* a = n.a >= 0 ? &nodes_[static_cast<std::size_t>(n.a)].value : nullptr;
    const Tensor* b = n.b >= 0 ? &nodes_[static_cast<std::size_t>(n.b)].value : nullptr;
    auto& slot_a = n.a >= 0 ? adj[static_cast<std::size_t>(n.a)] : adj[idx];
    auto& slot_b = n.b >= 0 ? adj[static_cast<std::size_t>(n.b)] : adj[idx];
    const Tensor& y = n.value;

    switch (n.op) {
      case Op::kLeaf:
      case Op::kStepMask:
        break;
      case Op::kMatMul:
        if (need_a) accumulate(slot_a, matmul_nt(g, *b));
        if (need_b) accumulate(slot_b, matmul_tn(*a, g));
        break;
      case Op::kTranspose:
        if (need_a) accumulate(slot_a, transpose_values(g));
        break;
      case Op::kAdd:
        if (need_a) accumulate(slot_a, g);
        if (need_b) accumulate(slot_b, g);
        break;
      case Op::kSub:
        if (need_a) accumulate(slot_a, g);
        if (need_b) accumulate(slot_b, map(g, [](double v) { return -v; }));
        break;
      case Op::kMul:
        if (need_a) accumulate(slot_a, zip(n.op, g, *b, [](double x, double y2) { return x * y2; }));
        if (need_b) accumulate(slot_b, zip(n.op, g, *a, [](double x, double y2) { return x * y2; }));
        break;
      case Op::kScale:
        if (need_a) accumulate(slot_a, map(g, [c = n.attr](double v) { return c * v; }));
        break;
      case Op::kAddScalar:
        if (need_a) accumulate(slot_a, g);
        break;
      case Op::kAddRow:
        if (need_a) accumulate(slot_a, g);
        if (need_b) accumulate(slot_b, sum_rows_values(g));
        break;
      case Op::kSumRows:
        if (need_a) accumulate(slot_a, broadcast_rows_values(g, a->rows()));
        break;
      case Op::kBroadcastRows:
        if (need_a) accumulate(slot_a, sum_rows_values(g));
        break;
      case Op::kBroadcastScalar: {
        double s = 0.0;
        for (double v : g.data()) s += v;
        if (need_a) accumulate(slot_a, Tensor(a->shape(), s));
        break;
      }
      case Op::kSum:
        if (need_a) accumulate(slot_a, Tensor(a->shape(), g[0]));
        break;
      case Op::kMean:
        if (need_a) accumulate(slot_a, Tensor(a->shape(), g[0] / static_cast<double>(a->size())));
        break;
      case Op::kTanh:
        if (need_a) accumulate(slot_a, zip(n.op, g, y, [](double gv, double t) { return gv * (1.0 - t * t); }));
        break;
      case Op::kRelu:
        if (need_a) accumulate(slot_a, zip(n.op, g, *a, [](double gv, double x) { return x > 0.0 ? gv : 0.0; }));
        break;
      case Op::kLeakyRelu:
        if (need_a) {
          accumulate(slot_a, zip(n.op, g, *a, [s = n.attr](double gv, double x) { return x > 0.0 ? gv : s * gv; }));
        }
        break;
      case Op::kSigmoid:
        if (need_a) accumulate(slot_a, zip(n.op, g, y, [](double gv, double s) { return gv * s * (1.0 - s); }));
        break;
      case Op::kSquare:
        if (need_a) accumulate(slot_a, zip(n.op, g, *a, [](double gv, double x) { return 2.0 * x * gv; }));
        break;
      case Op::kSqrt:
        if (need_a) {
          accumulate(slot_a, zip(n.op, g, y, [](double gv, double r) { return r > 0.0 ? 0.5 * gv / r : 0.0; }));
        }
        break;
      case Op::kSliceCols:
        if (need_a) accumulate(slot_a, pad_cols_values(g, n.lo, a->cols()));
        break;
      case Op::kPadCols:
        if (need_a) accumulate(slot_a, slice_cols_values(g, n.lo, n.lo + a->cols()));
        break;
      case Op::kRowNorm:
        if (need_a) {
          Tensor ga(a->shape());
          for (std::size_t i = 0; i < a->rows(); ++i) {
            const double norm = y[i];
            if (norm == 0.0) continue;
            for (std::size_t j = 0; j < a->cols(); ++j) ga.at(i, j) = g[i] * a->at(i, j) / norm;
          }
          accumulate(slot_a, std::move(ga));
        }
        break;
      case Op::kSoftmaxXent:
        if (need_a) {
          Tensor p = softmax_rows(*a);
          const double k = g[0] / static_cast<double>(a->rows());
          for (std::size_t i = 0; i < p.size(); ++i) p[i] = k * (p[i] - (*b)[i]);
          accumulate(slot_a, std::move(p));
        }
        break;
      case Op::kSoftplus:
        if (need_a) accumulate(slot_a, zip(n.op, g, *a, [](double gv, double x) { return gv * sigmoid_scalar(x); }));
        break;
    }
  }

  std::vector<Tensor> grads;
  grads.reserve(wrt.size());
  for (const auto& w : wrt) {
    const auto id = static_cast<std::size_t>(w.id());
    if (id < count && adj[id]) {
      grads.push_back(*adj[id]);
    } else {
      grads.emplace_back(nodes_[id].value.shape());
    }
  }
  return grads;
}

Tensor Graph::backward(Var output, Var wrt) const {
  const Var one[] = {wrt};
  return std::move(backward(output, one).front());
}

Var Graph::input_gradient(Var output, Var input) {
  check_fresh("input_gradient");
  if (output.graph() != this || input.graph() != this) throw UsageError("input_gradient: Var belongs to another graph");
  if (output.value().size() != 1) {
    throw UsageError("input_gradient: output must be scalar, got shape " + shape_str(output.shape()));
  }
  const std::size_t count = static_cast<std::size_t>(output.id()) + 1;
  const auto in_id = static_cast<std::size_t>(input.id());
  if (in_id >= count) return constant(Tensor(input.shape()));

  std::vector<char> depends(count, 0);
  depends[in_id] = 1;
  for (std::size_t i = in_id + 1; i < count; ++i) {
    const auto& n = nodes_[i];
    if (n.op == Op::kLeaf || n.op == Op::kStepMask) continue;
    if ((n.a >= 0 && depends[static_cast<std::size_t>(n.a)]) ||
        (n.op != Op::kSoftmaxXent && n.b >= 0 && depends[static_cast<std::size_t>(n.b)])) {
      depends[i] = 1;
    }
  }
  if (!depends[count - 1]) return constant(Tensor(input.shape()));

  std::vector<std::optional<Var>> adj(count);
  adj[count - 1] = constant(Tensor(output.shape(), 1.0));
  auto add_to = [&](int target, Var g) {
    auto& slot = adj[static_cast<std::size_t>(target)];
    slot = slot ? (*slot + g) : g;
  };

  for (std::size_t idx = count; idx-- > in_id + 1;) {
    if (!adj[idx] || !depends[idx]) continue;
    // Copy: record() may reallocate nodes_.
    const Node n = nodes_[idx];
    const Var g = *adj[idx];
    const bool need_a = n.a >= 0 && depends[static_cast<std::size_t>(n.a)];
    const bool need_b = n.b >= 0 && depends[static_cast<std::size_t>(n.b)];
    const Var a = n.a >= 0 ? wrap(n.a) : Var{};
    const Var b = n.b >= 0 ? wrap(n.b) : Var{};
    const Var y = wrap(static_cast<int>(idx));

    switch (n.op) {
      case Op::kLeaf:
      case Op::kStepMask:
        break;
      case Op::kMatMul:
        if (need_a) add_to(n.a, matmul(g, transpose(b)));
        if (need_b) add_to(n.b, matmul(transpose(a), g));
        break;
      case Op::kTranspose:
        if (need_a) add_to(n.a, transpose(g));
        break;
      case Op::kAdd:
        if (need_a) add_to(n.a, g);
        if (need_b) add_to(n.b, g);
        break;
      case Op::kSub:
        if (need_a) add_to(n.a, g);
        if (need_b) add_to(n.b, scale(g, -1.0));
        break;
      case Op::kMul:
        if (need_a) add_to(n.a, g * b);
        if (need_b) add_to(n.b, g * a);
        break;
      case Op::kScale:
        if (need_a) add_to(n.a, scale(g, n.attr));
        break;
      case Op::kAddScalar:
        if (need_a) add_to(n.a, g);
        break;
      case Op::kAddRow:
        if (need_a) add_to(n.a, g);
        if (need_b) add_to(n.b, sum_rows(g));
        break;
      case Op::kSumRows:
        if (need_a) add_to(n.a, broadcast_rows(g, a.value().rows()));
        break;
      case Op::kBroadcastRows:
        if (need_a) add_to(n.a, sum_rows(g));
        break;
      case Op::kBroadcastScalar:
        if (need_a) add_to(n.a, broadcast_scalar(sum(g), a.shape()));
        break;
      case Op::kSum:
        if (need_a) add_to(n.a, broadcast_scalar(g, a.shape()));
        break;
      case Op::kMean:
        if (need_a) add_to(n.a, scale(broadcast_scalar(g, a.shape()), 1.0 / static_cast<double>(a.value().size())));
        break;
      case Op::kTanh:
        if (need_a) add_to(n.a, g * add_scalar(scale(square(y), -1.0), 1.0));
        break;
      case Op::kRelu:
        if (need_a) add_to(n.a, g * step_mask(a, 0.0));
        break;
      case Op::kLeakyRelu:
        if (need_a) add_to(n.a, g * step_mask(a, n.attr));
        break;
      case Op::kSigmoid:
        if (need_a) add_to(n.a, g * (y * add_scalar(scale(y, -1.0), 1.0)));
        break;
      case Op::kSquare:
        if (need_a) add_to(n.a, g * scale(a, 2.0));
        break;
      case Op::kSliceCols:
        if (need_a) add_to(n.a, pad_cols(g, n.lo, a.value().cols()));
        break;
      case Op::kPadCols:
        if (need_a) add_to(n.a, slice_cols(g, n.lo, n.lo + a.value().cols()));
        break;
      case Op::kSqrt:
      case Op::kRowNorm:
      case Op::kSoftmaxXent:
      case Op::kSoftplus:
        throw UsageError("second-order unsupported for op " + std::string(op_name(n.op)));
    }
  }
  if (!adj[in_id]) return constant(Tensor(input.shape()));
  return *adj[in_id];
}

namespace {

Graph& same_graph(Var a, Var b, Op op) {
  if (!a.valid() || !b.valid()) throw UsageError(std::string(op_name(op)) + ": unbound Var");
  if (a.graph() != b.graph()) throw UsageError(std::string(op_name(op)) + ": operands from different graphs");
  return *a.graph();
}

Graph& graph_of(Var a, Op op) {
  if (!a.valid()) throw UsageError(std::string(op_name(op)) + ": unbound Var");
  return *a.graph();
}

Var unary(Op op, Var a, double attr = 0.0, std::size_t lo = 0, std::size_t hi = 0) {
  Node n;
  n.op = op;
  n.a = a.id();
  n.attr = attr;
  n.lo = lo;
  n.hi = hi;
  return graph_of(a, op).record(std::move(n));
}

Var binary(Op op, Var a, Var b) {
  Node n;
  n.op = op;
  n.a = a.id();
  n.b = b.id();
  return same_graph(a, b, op).record(std::move(n));
}

}  // namespace

Var matmul(Var a, Var b) { return binary(Op::kMatMul, a, b); }
Var transpose(Var a) { return unary(Op::kTranspose, a); }
Var operator+(Var a, Var b) { return binary(Op::kAdd, a, b); }
Var operator-(Var a, Var b) { return binary(Op::kSub, a, b); }
Var operator*(Var a, Var b) { return binary(Op::kMul, a, b); }
Var scale(Var a, double c) { return unary(Op::kScale, a, c); }
Var add_scalar(Var a, double c) { return unary(Op::kAddScalar, a, c); }
Var add_row(Var x, Var row) { return binary(Op::kAddRow, x, row); }
Var sum_rows(Var a) { return unary(Op::kSumRows, a); }
Var broadcast_rows(Var row, std::size_t n) { return unary(Op::kBroadcastRows, row, 0.0, n); }

Var broadcast_scalar(Var s, Shape shape) {
  Node n;
  n.op = Op::kBroadcastScalar;
  n.a = s.id();
  n.aux = std::move(shape);
  return graph_of(s, n.op).record(std::move(n));
}

Var sum(Var a) { return unary(Op::kSum, a); }
Var mean(Var a) { return unary(Op::kMean, a); }
Var tanh(Var a) { return unary(Op::kTanh, a); }
Var relu(Var a) { return unary(Op::kRelu, a); }
Var leaky_relu(Var a, double slope) { return unary(Op::kLeakyRelu, a, slope); }
Var sigmoid(Var a) { return unary(Op::kSigmoid, a); }
Var square(Var a) { return unary(Op::kSquare, a); }
Var sqrt(Var a) { return unary(Op::kSqrt, a); }
Var step_mask(Var a, double slope) { return unary(Op::kStepMask, a, slope); }
Var slice_cols(Var a, std::size_t begin, std::size_t end) { return unary(Op::kSliceCols, a, 0.0, begin, end); }
Var pad_cols(Var a, std::size_t begin, std::size_t total) { return unary(Op::kPadCols, a, 0.0, begin, total); }
Var row_norm(Var a) { return unary(Op::kRowNorm, a); }
Var softmax_cross_entropy(Var logits, Var target) { return binary(Op::kSoftmaxXent, logits, target); }
Var softplus(Var a) { return unary(Op::kSoftplus, a); }

}  // namespace mgf::ad
