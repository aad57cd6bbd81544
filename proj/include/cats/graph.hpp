#pragma once

// Reverse-mode automatic differentiation over small dense row-major matrices.
//
// A Graph records every executed operation in creation order, which is a
// valid topological order, so backward() is a single reverse sweep. Values
// are either owned by the node or borrowed from a Parameter; parameter
// gradients accumulate directly into Parameter::grad.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cats::nn {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
struct Parameter {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> value;
  std::vector<T> grad;

  Parameter() = default;
  Parameter(std::string n, std::size_t r, std::size_t c)
      : name(std::move(n)), rows(r), cols(c), value(r * c, T(0)) {}

  std::size_t size() const { return value.size(); }
  void zero_grad() { grad.assign(value.size(), T(0)); }
};

struct Var {
  std::uint32_t id = 0;
};

namespace detail {
inline std::string shape_str(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}
}  // namespace detail

template <typename T>
class Graph {
 public:
  using UnaryFn = std::function<T(T)>;
  // Receives (input, output) and returns d output / d input.
  using UnaryDerivFn = std::function<T(T, T)>;

  Graph() = default;
  explicit Graph(bool check_finite) : check_finite_(check_finite) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) noexcept = default;
  Graph& operator=(Graph&&) noexcept = default;

  std::size_t size() const { return nodes_.size(); }
  std::size_t rows(Var v) const { return nodes_[v.id].rows; }
  std::size_t cols(Var v) const { return nodes_[v.id].cols; }
  std::span<const T> value(Var v) const {
    const Node& n = nodes_[v.id];
    return {n.data(), n.rows * n.cols};
  }
  std::vector<T> copy_value(Var v) const {
    auto s = value(v);
    return {s.begin(), s.end()};
  }
  T scalar(Var v) const {
    const Node& n = nodes_[v.id];
    if (n.rows * n.cols != 1) {
      throw ShapeError("scalar: expected 1x1, got " + detail::shape_str(n.rows, n.cols));
    }
    return n.data()[0];
  }
  // Gradient of the last backward() w.r.t. a node; empty when unreached.
  std::span<const T> grad(Var v) const { return nodes_[v.id].grad; }

  Var constant(std::size_t r, std::size_t c, std::vector<T> data) {
    if (data.size() != r * c) {
      throw ShapeError("constant: " + detail::shape_str(r, c) + " needs " +
                       std::to_string(r * c) + " values, got " + std::to_string(data.size()));
    }
    Node n = make(Op::Leaf, r, c);
    n.value = std::move(data);
    return push(std::move(n));
  }

  Var zeros(std::size_t r, std::size_t c) { return constant(r, c, std::vector<T>(r * c, T(0))); }

  // Registers a parameter as a leaf; repeated calls return the same node.
  Var param(Parameter<T>& p) {
    for (const auto& [ptr, id] : param_nodes_) {
      if (ptr == &p) return Var{id};
    }
    Node n = make(Op::Leaf, p.rows, p.cols);
    n.param = &p;
    Var v = push(std::move(n));
    param_nodes_.emplace_back(&p, v.id);
    return v;
  }

  Var matmul(Var a, Var b) {
    const std::size_t m = rows(a), k = cols(a), n = cols(b);
    if (rows(b) != k) mismatch("matmul", a, b);
    Node out = make(Op::Matmul, m, n, a, b);
    out.value.assign(m * n, T(0));
    const T* A = data(a);
    const T* B = data(b);
    T* C = out.value.data();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const T av = A[i * k + p];
        const T* brow = B + p * n;
        T* crow = C + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
    return push(std::move(out));
  }

  Var add(Var a, Var b) {
    same_shape("add", a, b);
    Node out = make(Op::Add, rows(a), cols(a), a, b);
    out.value.resize(rows(a) * cols(a));
    const T* A = data(a);
    const T* B = data(b);
    for (std::size_t i = 0; i < out.value.size(); ++i) out.value[i] = A[i] + B[i];
    return push(std::move(out));
  }

  // a[m x n] + b[1 x n] added to every row.
  Var add_row(Var a, Var b) {
    if (rows(b) != 1 || cols(b) != cols(a)) mismatch("add_row", a, b);
    const std::size_t m = rows(a), n = cols(a);
    Node out = make(Op::AddRow, m, n, a, b);
    out.value.resize(m * n);
    const T* A = data(a);
    const T* B = data(b);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out.value[i * n + j] = A[i * n + j] + B[j];
    return push(std::move(out));
  }

  Var mul(Var a, Var b) {
    same_shape("mul", a, b);
    Node out = make(Op::Mul, rows(a), cols(a), a, b);
    out.value.resize(rows(a) * cols(a));
    const T* A = data(a);
    const T* B = data(b);
    for (std::size_t i = 0; i < out.value.size(); ++i) out.value[i] = A[i] * B[i];
    return push(std::move(out));
  }

  Var scale(Var a, T s) {
    Node out = make(Op::Scale, rows(a), cols(a), a);
    out.scalar = s;
    out.value.resize(rows(a) * cols(a));
    const T* A = data(a);
    for (std::size_t i = 0; i < out.value.size(); ++i) out.value[i] = A[i] * s;
    return push(std::move(out));
  }

  // axis 0 stacks rows (equal cols), axis 1 joins columns (equal rows).
  Var concat(std::span<const Var> parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    if (axis != 0 && axis != 1) throw ShapeError("concat: axis must be 0 or 1");
    std::size_t r = rows(parts[0]), c = cols(parts[0]);
    for (std::size_t i = 1; i < parts.size(); ++i) {
      if (axis == 0) {
        if (cols(parts[i]) != c) mismatch("concat(axis=0)", parts[0], parts[i]);
        r += rows(parts[i]);
      } else {
        if (rows(parts[i]) != r) mismatch("concat(axis=1)", parts[0], parts[i]);
        c += cols(parts[i]);
      }
    }
    Node out = make(Op::Concat, r, c);
    out.inputs.assign(parts.begin(), parts.end());
    out.axis = axis;
    out.value.resize(r * c);
    if (axis == 0) {
      std::size_t off = 0;
      for (Var p : parts) {
        const T* P = data(p);
        for (std::size_t i = 0; i < rows(p) * c; ++i) out.value[off + i] = P[i];
        off += rows(p) * c;
      }
    } else {
      std::size_t off = 0;
      for (Var p : parts) {
        const std::size_t pc = cols(p);
        const T* P = data(p);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < pc; ++j) out.value[i * c + off + j] = P[i * pc + j];
        off += pc;
      }
    }
    return push(std::move(out));
  }
  Var concat(std::initializer_list<Var> parts, int axis) {
    return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
  }

  Var slice_cols(Var a, std::size_t start, std::size_t len) {
    if (start + len > cols(a) || len == 0) {
      throw ShapeError("slice_cols: [" + std::to_string(start) + ", +" + std::to_string(len) +
                       ") out of range for " + detail::shape_str(rows(a), cols(a)));
    }
    const std::size_t m = rows(a), n = cols(a);
    Node out = make(Op::SliceCols, m, len, a);
    out.offset = start;
    out.value.resize(m * len);
    const T* A = data(a);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < len; ++j) out.value[i * len + j] = A[i * n + start + j];
    return push(std::move(out));
  }

  Var row(Var a, std::size_t i) {
    if (i >= rows(a)) {
      throw ShapeError("row: index " + std::to_string(i) + " out of range for " +
                       detail::shape_str(rows(a), cols(a)));
    }
    const std::size_t n = cols(a);
    Node out = make(Op::Row, 1, n, a);
    out.offset = i;
    const T* A = data(a) + i * n;
    out.value.assign(A, A + n);
    return push(std::move(out));
  }

  Var reshape(Var a, std::size_t r, std::size_t c) {
    if (r * c != rows(a) * cols(a)) {
      throw ShapeError("reshape: cannot view " + detail::shape_str(rows(a), cols(a)) + " as " +
                       detail::shape_str(r, c));
    }
    Node out = make(Op::Reshape, r, c, a);
    auto s = value(a);
    out.value.assign(s.begin(), s.end());
    return push(std::move(out));
  }

  Var tanh(Var a) {
    Node out = make(Op::Tanh, rows(a), cols(a), a);
    out.value.resize(rows(a) * cols(a));
    const T* A = data(a);
    for (std::size_t i = 0; i < out.value.size(); ++i) out.value[i] = std::tanh(A[i]);
    return push(std::move(out));
  }

  Var sigmoid(Var a) {
    Node out = make(Op::Sigmoid, rows(a), cols(a), a);
    out.value.resize(rows(a) * cols(a));
    const T* A = data(a);
    for (std::size_t i = 0; i < out.value.size(); ++i) out.value[i] = sigmoid_fn(A[i]);
    return push(std::move(out));
  }

  // Row-wise softmax with max subtraction.
  Var softmax(Var a) {
    const std::size_t m = rows(a), n = cols(a);
    Node out = make(Op::Softmax, m, n, a);
    out.value.resize(m * n);
    const T* A = data(a);
    for (std::size_t i = 0; i < m; ++i) softmax_row(A + i * n, out.value.data() + i * n, n);
    return push(std::move(out));
  }

  Var embedding_lookup(Parameter<T>& table, std::span<const int> ids) {
    if (ids.empty()) throw ShapeError("embedding_lookup: no ids");
    Var t = param(table);
    const std::size_t n = table.cols;
    Node out = make(Op::Lookup, ids.size(), n, t);
    out.ids.assign(ids.begin(), ids.end());
    out.value.resize(ids.size() * n);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= table.rows) {
        throw ShapeError("embedding_lookup: id " + std::to_string(ids[i]) + " outside table " +
                         table.name + " of " + std::to_string(table.rows) + " rows");
      }
      const T* src = table.value.data() + static_cast<std::size_t>(ids[i]) * n;
      std::copy(src, src + n, out.value.begin() + static_cast<std::ptrdiff_t>(i * n));
    }
    return push(std::move(out));
  }

  // -log softmax(logits)[target] for a 1 x V row.
  Var cross_entropy(Var logits, int target) {
    if (rows(logits) != 1) {
      throw ShapeError("cross_entropy: expected a single row, got " +
                       detail::shape_str(rows(logits), cols(logits)));
    }
    const std::size_t n = cols(logits);
    if (target < 0 || static_cast<std::size_t>(target) >= n) {
      throw ShapeError("cross_entropy: target " + std::to_string(target) + " outside width " +
                       std::to_string(n));
    }
    Node out = make(Op::CrossEntropy, 1, 1, logits);
    out.aux.resize(n);
    softmax_row(data(logits), out.aux.data(), n);
    out.offset = static_cast<std::size_t>(target);
    // log-sum-exp form keeps the exact-zero case exact.
    const T* L = data(logits);
    T mx = L[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, L[j]);
    T sum = 0;
    for (std::size_t j = 0; j < n; ++j) sum += std::exp(L[j] - mx);
    out.value = {std::log(sum) - (L[target] - mx)};
    return push(std::move(out));
  }

  Var sum(Var a) {
    Node out = make(Op::Sum, 1, 1, a);
    T s = 0;
    for (T v : value(a)) s += v;
    out.value = {s};
    return push(std::move(out));
  }

  Var add_n(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("add_n: no inputs");
    for (std::size_t i = 1; i < parts.size(); ++i) same_shape("add_n", parts[0], parts[i]);
    Node out = make(Op::AddN, rows(parts[0]), cols(parts[0]));
    out.inputs.assign(parts.begin(), parts.end());
    out.value.assign(out.rows * out.cols, T(0));
    for (Var p : parts) {
      const T* P = data(p);
      for (std::size_t i = 0; i < out.value.size(); ++i) out.value[i] += P[i];
    }
    return push(std::move(out));
  }

  // Gate nonlinearity of an LSTM step. z = [i f o g] pre-activations (1 x 4h),
  // c the previous cell (1 x h). Output is [h' c'] (1 x 2h).
  Var lstm_gates(Var z, Var c) {
    const std::size_t h = cols(c);
    if (rows(z) != 1 || rows(c) != 1 || cols(z) != 4 * h) mismatch("lstm_gates", z, c);
    Node out = make(Op::LstmGates, 1, 2 * h, z, c);
    out.aux.resize(5 * h);  // i f o g tanh(c')
    out.value.resize(2 * h);
    const T* Z = data(z);
    const T* C = data(c);
    for (std::size_t j = 0; j < h; ++j) {
      const T ig = sigmoid_fn(Z[j]);
      const T fg = sigmoid_fn(Z[h + j]);
      const T og = sigmoid_fn(Z[2 * h + j]);
      const T gg = std::tanh(Z[3 * h + j]);
      const T cn = fg * C[j] + ig * gg;
      const T tc = std::tanh(cn);
      out.aux[j] = ig;
      out.aux[h + j] = fg;
      out.aux[2 * h + j] = og;
      out.aux[3 * h + j] = gg;
      out.aux[4 * h + j] = tc;
      out.value[j] = og * tc;
      out.value[h + j] = cn;
    }
    return push(std::move(out));
  }

  // Elementwise op with caller-supplied derivative; used to build test
  // fixtures such as deliberately wrong backward passes.
  Var custom_unary(Var a, UnaryFn f, UnaryDerivFn df) {
    Node out = make(Op::Custom, rows(a), cols(a), a);
    out.value.resize(rows(a) * cols(a));
    const T* A = data(a);
    for (std::size_t i = 0; i < out.value.size(); ++i) out.value[i] = f(A[i]);
    out.deriv = std::move(df);
    return push(std::move(out));
  }

  void backward(Var loss) {
    Node& root = nodes_[loss.id];
    if (root.rows * root.cols != 1) {
      throw ShapeError("backward: loss must be scalar, got " +
                       detail::shape_str(root.rows, root.cols));
    }
    for (Node& n : nodes_) n.grad.clear();
    root.grad = {T(1)};
    for (std::size_t id = loss.id + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (n.grad.empty()) continue;
      propagate(n);
    }
  }

 private:
  enum class Op : std::uint8_t {
    Leaf, Matmul, Add, AddRow, Mul, Scale, Concat, SliceCols, Row, Reshape,
    Tanh, Sigmoid, Softmax, Lookup, CrossEntropy, Sum, AddN, LstmGates, Custom,
  };

  struct Node {
    Op op = Op::Leaf;
    std::size_t rows = 0, cols = 0;
    Var a{}, b{};
    std::vector<Var> inputs;
    std::vector<int> ids;
    std::vector<T> value;
    std::vector<T> aux;
    std::vector<T> grad;
    Parameter<T>* param = nullptr;
    T scalar = T(0);
    std::size_t offset = 0;
    int axis = 0;
    UnaryDerivFn deriv;

    const T* data() const { return param ? param->value.data() : value.data(); }
  };

  static T sigmoid_fn(T x) {
    if (x >= 0) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
  }

  static void softmax_row(const T* in, T* out, std::size_t n) {
    T mx = in[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, in[j]);
    T sum = 0;
    for (std::size_t j = 0; j < n; ++j) {
      out[j] = std::exp(in[j] - mx);
      sum += out[j];
    }
    for (std::size_t j = 0; j < n; ++j) out[j] /= sum;
  }

  const T* data(Var v) const { return nodes_[v.id].data(); }

  static Node make(Op op, std::size_t r, std::size_t c, Var a = {}, Var b = {}) {
    Node n;
    n.op = op;
    n.rows = r;
    n.cols = c;
    n.a = a;
    n.b = b;
    return n;
  }

  Var push(Node&& n) {
    if (check_finite_ && n.param == nullptr) {
      for (T v : n.value) {
        if (!std::isfinite(v)) throw NumericError("non-finite value produced by graph node " +
                                                  std::to_string(nodes_.size()));
      }
    }
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  [[noreturn]] void mismatch(const char* op, Var a, Var b) const {
    throw ShapeError(std::string(op) + ": shape mismatch " + detail::shape_str(rows(a), cols(a)) +
                     " vs " + detail::shape_str(rows(b), cols(b)));
  }
  void same_shape(const char* op, Var a, Var b) const {
    if (rows(a) != rows(b) || cols(a) != cols(b)) mismatch(op, a, b);
  }

  std::vector<T>& grad_of(Var v) {
    Node& n = nodes_[v.id];
    if (n.param) {
      if (n.param->grad.size() != n.param->value.size()) n.param->grad.assign(n.param->value.size(), T(0));
      // Param leaves accumulate straight into the parameter.
      return n.param->grad;
    }
    if (n.grad.empty()) n.grad.assign(n.rows * n.cols, T(0));
    return n.grad;
  }

  void propagate(Node& n) {
    // nodes_ never reallocates during backward, so this reference stays valid.
    const std::vector<T>& g = n.grad;
    switch (n.op) {
      case Op::Leaf:
        if (n.param) {
          auto& pg = grad_of(Var{static_cast<std::uint32_t>(&n - nodes_.data())});
          for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
        }
        break;
      case Op::Matmul: {
        const std::size_t m = rows(n.a), k = cols(n.a), c = cols(n.b);
        const T* A = data(n.a);
        const T* B = data(n.b);
        auto& ga = grad_of(n.a);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            T s = 0;
            for (std::size_t j = 0; j < c; ++j) s += g[i * c + j] * B[p * c + j];
            ga[i * k + p] += s;
          }
        auto& gb = grad_of(n.b);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const T av = A[i * k + p];
            for (std::size_t j = 0; j < c; ++j) gb[p * c + j] += av * g[i * c + j];
          }
        break;
      }
      case Op::Add: {
        auto& ga = grad_of(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        auto& gb = grad_of(n.b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        break;
      }
      case Op::AddRow: {
        auto& ga = grad_of(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        auto& gb = grad_of(n.b);
        for (std::size_t i = 0; i < n.rows; ++i)
          for (std::size_t j = 0; j < n.cols; ++j) gb[j] += g[i * n.cols + j];
        break;
      }
      case Op::Mul: {
        const T* A = data(n.a);
        const T* B = data(n.b);
        auto& ga = grad_of(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B[i];
        auto& gb = grad_of(n.b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A[i];
        break;
      }
      case Op::Scale: {
        auto& ga = grad_of(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.scalar;
        break;
      }
      case Op::Concat: {
        std::size_t off = 0;
        for (Var p : n.inputs) {
          auto& gp = grad_of(p);
          const std::size_t pr = rows(p), pc = cols(p);
          if (n.axis == 0) {
            for (std::size_t i = 0; i < pr * pc; ++i) gp[i] += g[off + i];
            off += pr * pc;
          } else {
            for (std::size_t i = 0; i < pr; ++i)
              for (std::size_t j = 0; j < pc; ++j) gp[i * pc + j] += g[i * n.cols + off + j];
            off += pc;
          }
        }
        break;
      }
      case Op::SliceCols: {
        auto& ga = grad_of(n.a);
        const std::size_t ac = cols(n.a);
        for (std::size_t i = 0; i < n.rows; ++i)
          for (std::size_t j = 0; j < n.cols; ++j) ga[i * ac + n.offset + j] += g[i * n.cols + j];
        break;
      }
      case Op::Row: {
        auto& ga = grad_of(n.a);
        for (std::size_t j = 0; j < n.cols; ++j) ga[n.offset * n.cols + j] += g[j];
        break;
      }
      case Op::Reshape: {
        auto& ga = grad_of(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        break;
      }
      case Op::Tanh: {
        auto& ga = grad_of(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (T(1) - n.value[i] * n.value[i]);
        break;
      }
      case Op::Sigmoid: {
        auto& ga = grad_of(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.value[i] * (T(1) - n.value[i]);
        break;
      }
      case Op::Softmax: {
        auto& ga = grad_of(n.a);
        for (std::size_t i = 0; i < n.rows; ++i) {
          const T* y = n.value.data() + i * n.cols;
          const T* gy = g.data() + i * n.cols;
          T dot = 0;
          for (std::size_t j = 0; j < n.cols; ++j) dot += gy[j] * y[j];
          for (std::size_t j = 0; j < n.cols; ++j) ga[i * n.cols + j] += y[j] * (gy[j] - dot);
        }
        break;
      }
      case Op::Lookup: {
        auto& gt = grad_of(n.a);
        for (std::size_t i = 0; i < n.ids.size(); ++i) {
          const std::size_t r = static_cast<std::size_t>(n.ids[i]);
          for (std::size_t j = 0; j < n.cols; ++j) gt[r * n.cols + j] += g[i * n.cols + j];
        }
        break;
      }
      case Op::CrossEntropy: {
        auto& ga = grad_of(n.a);
        for (std::size_t j = 0; j < n.aux.size(); ++j) {
          const T onehot = (j == n.offset) ? T(1) : T(0);
          ga[j] += g[0] * (n.aux[j] - onehot);
        }
        break;
      }
      case Op::Sum: {
        auto& ga = grad_of(n.a);
        for (T& v : ga) v += g[0];
        break;
      }
      case Op::AddN: {
        for (Var p : n.inputs) {
          auto& gp = grad_of(p);
          for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i];
        }
        break;
      }
      case Op::LstmGates: {
        const std::size_t h = n.cols / 2;
        const T* C = data(n.b);
        auto& gz = grad_of(n.a);
        auto& gc = grad_of(n.b);
        for (std::size_t j = 0; j < h; ++j) {
          const T ig = n.aux[j], fg = n.aux[h + j], og = n.aux[2 * h + j];
          const T gg = n.aux[3 * h + j], tc = n.aux[4 * h + j];
          const T dh = g[j];
          const T dc = g[h + j] + dh * og * (T(1) - tc * tc);
          gz[j] += dc * gg * ig * (T(1) - ig);
          gz[h + j] += dc * C[j] * fg * (T(1) - fg);
          gz[2 * h + j] += dh * tc * og * (T(1) - og);
          gz[3 * h + j] += dc * ig * (T(1) - gg * gg);
          gc[j] += dc * fg;
        }
        break;
      }
      case Op::Custom: {
        const T* A = data(n.a);
        auto& ga = grad_of(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.deriv(A[i], n.value[i]);
        break;
      }
    }
  }

  std::vector<Node> nodes_;
  std::vector<std::pair<Parameter<T>*, std::uint32_t>> param_nodes_;
#ifdef NDEBUG
  bool check_finite_ = false;
#else
  bool check_finite_ = true;
#endif
};

// One LSTM step built from primitives plus the fused gate node.
// Parameter layout: w (in x 4h), u (h x 4h), b (1 x 4h), gate order i f o g.
template <typename T>
struct LstmParams {
  Parameter<T> w, u, b;
  std::size_t hidden() const { return u.rows; }
  std::size_t input() const { return w.rows; }
};

template <typename T>
std::pair<Var, Var> lstm_cell(Graph<T>& g, Var x, Var h, Var c, LstmParams<T>& p) {
  const std::size_t hid = p.hidden();
  if (g.cols(x) != p.input() || g.cols(h) != hid || g.cols(c) != hid) {
    throw ShapeError("lstm_cell: x " + detail::shape_str(g.rows(x), g.cols(x)) + ", h " +
                     detail::shape_str(g.rows(h), g.cols(h)) + ", c " +
                     detail::shape_str(g.rows(c), g.cols(c)) + " incompatible with input " +
                     std::to_string(p.input()) + ", hidden " + std::to_string(hid));
  }
  Var z = g.add(g.add(g.matmul(x, g.param(p.w)), g.matmul(h, g.param(p.u))), g.param(p.b));
  Var hc = g.lstm_gates(z, c);
  return {g.slice_cols(hc, 0, hid), g.slice_cols(hc, hid, hid)};
}

}  // namespace cats::nn
