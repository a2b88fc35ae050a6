#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "degaa/errors.hpp"

namespace degaa {

// Dense row-major matrix of 64-bit floats. Scalars are 1x1, row vectors 1xn,
// column vectors nx1. Gradients live on the tape, not on the tensor.
class Tensor {
 public:
  Tensor() = default;

  Tensor(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
      throw DimensionError("Tensor: data length " + std::to_string(data_.size()) + " does not match shape " +
                           shape_string());
  }

  static Tensor scalar(double v) { return Tensor(1, 1, {v}); }
  static Tensor row(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor(1, n, std::move(v));
  }
  static Tensor column(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor(n, 1, std::move(v));
  }
  static Tensor filled(std::size_t rows, std::size_t cols, double v) {
    Tensor t(rows, cols);
    for (auto& x : t.data_) x = v;
    return t;
  }
  static Tensor identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  std::vector<std::size_t> shape() const { return {rows_, cols_}; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  bool all_finite() const {
    for (const double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::string shape_string() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

  bool operator==(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Exact sum of doubles via Shewchuk's expansion accumulation. The result is
// the correctly rounded value of the true real sum, independent of input
// order, which makes mean-based embeddings exactly permutation- and
// duplication-invariant.
class ExactSum {
 public:
  void add(double x) {
    std::size_t out = 0;
    for (std::size_t i = 0; i < parts_.size(); ++i) {
      double y = parts_[i];
      if (std::abs(x) < std::abs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) parts_[out++] = lo;
      x = hi;
    }
    parts_.resize(out);
    parts_.push_back(x);
  }

  double value() const {
    double s = 0.0;
    for (const double p : parts_) s += p;
    return s;
  }

 private:
  std::vector<double> parts_;
};

inline double exact_mean(const std::vector<double>& xs) {
  if (xs.empty()) throw ContractError("exact_mean: empty input");
  ExactSum acc;
  for (const double x : xs) acc.add(x);
  return acc.value() / static_cast<double>(xs.size());
}

enum class OpKind {
  input,
  matmul,
  add,
  relu,
  softmax_rows,
  concat_cols,
  mean,
  cross_entropy,
  elementwise_mul,
  scale,
  transpose,
};

inline const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::input: return "input";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::relu: return "relu";
    case OpKind::softmax_rows: return "softmax_rows";
    case OpKind::concat_cols: return "concat_cols";
    case OpKind::mean: return "mean";
    case OpKind::cross_entropy: return "cross_entropy";
    case OpKind::elementwise_mul: return "elementwise_mul";
    case OpKind::scale: return "scale";
    case OpKind::transpose: return "transpose";
  }
  return "?";
}

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Nodes are recorded in construction order; backward walks
// the exact reverse. One tape per forward pass; parameters are bound as leaf
// nodes and their gradients read back after backward().
//
// cross_entropy floors probabilities at kLogFloor inside the log (and treats
// the floored region as constant in backward) so a fully saturated softmax
// cannot produce a non-finite loss.
class Tape {
 public:
  static constexpr double kLogFloor = 1e-12;

  Var leaf(Tensor value, bool requires_grad = false) {
    check_finite(value, "input");
    return push(OpKind::input, std::move(value), -1, -1, requires_grad);
  }

  Var constant(Tensor value) { return leaf(std::move(value), false); }

  Var matmul(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (A.cols() != B.rows())
      throw DimensionError(std::string("matmul: inner dimensions disagree, lhs ") + A.shape_string() + " vs rhs " +
                           B.shape_string());
    Tensor C(A.rows(), B.cols());
    for (std::size_t i = 0; i < A.rows(); ++i)
      for (std::size_t j = 0; j < B.cols(); ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < A.cols(); ++k) acc += A(i, k) * B(k, j);
        C(i, j) = acc;
      }
    return push_checked(OpKind::matmul, std::move(C), a, b);
  }

  // Elementwise sum; also accepts a 1xN row bias added to every row of a.
  Var add(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    Tensor C(A.rows(), A.cols());
    if (A.same_shape(B)) {
      for (std::size_t i = 0; i < A.size(); ++i) C[i] = A[i] + B[i];
    } else if (B.rows() == 1 && B.cols() == A.cols()) {
      for (std::size_t i = 0; i < A.rows(); ++i)
        for (std::size_t j = 0; j < A.cols(); ++j) C(i, j) = A(i, j) + B(0, j);
    } else {
      throw DimensionError(std::string("add: shapes ") + A.shape_string() + " and " + B.shape_string() +
                           " are not conformable");
    }
    return push_checked(OpKind::add, std::move(C), a, b);
  }

  Var relu(Var a) {
    const Tensor& A = value(a);
    Tensor C(A.rows(), A.cols());
    for (std::size_t i = 0; i < A.size(); ++i) C[i] = A[i] > 0.0 ? A[i] : 0.0;
    return push_checked(OpKind::relu, std::move(C), a, -1);
  }

  Var softmax_rows(Var a) {
    const Tensor& A = value(a);
    if (A.rows() == 0 || A.cols() == 0) throw ContractError("softmax_rows: empty input");
    Tensor C(A.rows(), A.cols());
    for (std::size_t i = 0; i < A.rows(); ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < A.cols(); ++j) mx = std::max(mx, A(i, j));
      double sum = 0.0;
      for (std::size_t j = 0; j < A.cols(); ++j) {
        C(i, j) = std::exp(A(i, j) - mx);
        sum += C(i, j);
      }
      for (std::size_t j = 0; j < A.cols(); ++j) C(i, j) /= sum;
    }
    return push_checked(OpKind::softmax_rows, std::move(C), a, -1);
  }

  Var concat_cols(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (A.rows() != B.rows())
      throw DimensionError(std::string("concat_cols: row counts disagree, ") + A.shape_string() + " vs " +
                           B.shape_string());
    Tensor C(A.rows(), A.cols() + B.cols());
    for (std::size_t i = 0; i < A.rows(); ++i) {
      for (std::size_t j = 0; j < A.cols(); ++j) C(i, j) = A(i, j);
      for (std::size_t j = 0; j < B.cols(); ++j) C(i, A.cols() + j) = B(i, j);
    }
    return push_checked(OpKind::concat_cols, std::move(C), a, b);
  }

  Var mean(Var a) {
    const Tensor& A = value(a);
    if (A.size() == 0) throw ContractError("mean: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < A.size(); ++i) acc += A[i];
    return push_checked(OpKind::mean, Tensor::scalar(acc / static_cast<double>(A.size())), a, -1);
  }

  // Mean over rows of -log(p[i, label_i]). Rows must already be probability
  // vectors (sum 1 within 1e-6), e.g. softmax_rows output.
  Var cross_entropy(Var probs, std::vector<int> labels) {
    const Tensor& P = value(probs);
    if (labels.size() != P.rows())
      throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                           std::to_string(P.rows()) + " rows");
    for (std::size_t i = 0; i < P.rows(); ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < P.cols(); ++j) sum += P(i, j);
      if (std::abs(sum - 1.0) > 1e-6)
        throw ContractError("cross_entropy: row " + std::to_string(i) + " sums to " + std::to_string(sum) +
                            ", expected probabilities");
      if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= P.cols())
        throw ContractError("cross_entropy: label " + std::to_string(labels[i]) + " out of range at row " +
                            std::to_string(i));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < P.rows(); ++i)
      acc -= std::log(std::max(P(i, static_cast<std::size_t>(labels[i])), kLogFloor));
    Var v = push_checked(OpKind::cross_entropy, Tensor::scalar(acc / static_cast<double>(P.rows())), probs, -1);
    nodes_[static_cast<std::size_t>(v.id)].labels = std::move(labels);
    return v;
  }

  Var elementwise_mul(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (!A.same_shape(B))
      throw DimensionError(std::string("elementwise_mul: shapes ") + A.shape_string() + " and " + B.shape_string() +
                           " disagree");
    Tensor C(A.rows(), A.cols());
    for (std::size_t i = 0; i < A.size(); ++i) C[i] = A[i] * B[i];
    return push_checked(OpKind::elementwise_mul, std::move(C), a, b);
  }

  Var scale(Var a, double c) {
    if (!std::isfinite(c)) throw NumericError("scale: non-finite factor");
    const Tensor& A = value(a);
    Tensor C(A.rows(), A.cols());
    for (std::size_t i = 0; i < A.size(); ++i) C[i] = c * A[i];
    Var v = push_checked(OpKind::scale, std::move(C), a, -1);
    nodes_[static_cast<std::size_t>(v.id)].factor = c;
    return v;
  }

  Var transpose(Var a) {
    const Tensor& A = value(a);
    Tensor C(A.cols(), A.rows());
    for (std::size_t i = 0; i < A.rows(); ++i)
      for (std::size_t j = 0; j < A.cols(); ++j) C(j, i) = A(i, j);
    return push_checked(OpKind::transpose, std::move(C), a, -1);
  }

  const Tensor& value(Var v) const { return node(v).value; }

  const Tensor& grad(Var v) const {
    const Node& n = node(v);
    if (!n.requires_grad) throw ContractError("Tape::grad: node does not require grad");
    return n.grad;
  }

  bool requires_grad(Var v) const { return node(v).requires_grad; }

  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every node with
  // requires_grad by traversing the exact reverse of construction order.
  void backward(Var loss) {
    Node& top = nodes_.at(static_cast<std::size_t>(loss.id));
    if (top.value.size() != 1) throw ContractError("backward: loss must be scalar, got " + top.value.shape_string());
    if (!top.requires_grad) throw ContractError("backward: loss does not depend on any parameter");
    for (Node& n : nodes_)
      if (n.requires_grad) n.grad = Tensor(n.value.rows(), n.value.cols());
    top.grad[0] = 1.0;
    for (std::size_t idx = static_cast<std::size_t>(loss.id) + 1; idx-- > 0;) {
      Node& n = nodes_[idx];
      if (!n.requires_grad || n.op == OpKind::input) continue;
      propagate(n);
    }
  }

 private:
  struct Node {
    OpKind op = OpKind::input;
    int a = -1;
    int b = -1;
    bool requires_grad = false;
    double factor = 0.0;
    std::vector<int> labels;
    Tensor value;
    Tensor grad;
  };

  const Node& node(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)); }

  static void check_finite(const Tensor& t, const char* op) {
    if (!t.all_finite()) throw NumericError(std::string(op) + ": non-finite values");
  }

  Var push(OpKind op, Tensor value, int a, int b, bool requires_grad) {
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.requires_grad = requires_grad;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size() - 1)};
  }

  Var push_checked(OpKind op, Tensor value, Var a, int b_id) {
    check_finite(value, op_name(op));
    const bool rg = nodes_[static_cast<std::size_t>(a.id)].requires_grad ||
                    (b_id >= 0 && nodes_[static_cast<std::size_t>(b_id)].requires_grad);
    return push(op, std::move(value), a.id, b_id, rg);
  }

  Var push_checked(OpKind op, Tensor value, Var a, Var b) { return push_checked(op, std::move(value), a, b.id); }

  void accumulate(int id, const Tensor& g) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad) return;
    for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
  }

  void propagate(Node& n) {
    const Tensor& g = n.grad;
    switch (n.op) {
      case OpKind::input:
        break;
      case OpKind::matmul: {
        const Tensor& A = nodes_[static_cast<std::size_t>(n.a)].value;
        const Tensor& B = nodes_[static_cast<std::size_t>(n.b)].value;
        if (nodes_[static_cast<std::size_t>(n.a)].requires_grad) {
          Tensor ga(A.rows(), A.cols());
          for (std::size_t i = 0; i < A.rows(); ++i)
            for (std::size_t k = 0; k < A.cols(); ++k) {
              double acc = 0.0;
              for (std::size_t j = 0; j < B.cols(); ++j) acc += g(i, j) * B(k, j);
              ga(i, k) = acc;
            }
          accumulate(n.a, ga);
        }
        if (nodes_[static_cast<std::size_t>(n.b)].requires_grad) {
          Tensor gb(B.rows(), B.cols());
          for (std::size_t k = 0; k < B.rows(); ++k)
            for (std::size_t j = 0; j < B.cols(); ++j) {
              double acc = 0.0;
              for (std::size_t i = 0; i < A.rows(); ++i) acc += A(i, k) * g(i, j);
              gb(k, j) = acc;
            }
          accumulate(n.b, gb);
        }
        break;
      }
      case OpKind::add: {
        const Tensor& A = nodes_[static_cast<std::size_t>(n.a)].value;
        const Tensor& B = nodes_[static_cast<std::size_t>(n.b)].value;
        accumulate(n.a, g);
        if (nodes_[static_cast<std::size_t>(n.b)].requires_grad) {
          if (A.same_shape(B)) {
            accumulate(n.b, g);
          } else {
            Tensor gb(1, B.cols());
            for (std::size_t i = 0; i < A.rows(); ++i)
              for (std::size_t j = 0; j < A.cols(); ++j) gb(0, j) += g(i, j);
            accumulate(n.b, gb);
          }
        }
        break;
      }
      case OpKind::relu: {
        const Tensor& A = nodes_[static_cast<std::size_t>(n.a)].value;
        Tensor ga(A.rows(), A.cols());
        for (std::size_t i = 0; i < A.size(); ++i) ga[i] = A[i] > 0.0 ? g[i] : 0.0;
        accumulate(n.a, ga);
        break;
      }
      case OpKind::softmax_rows: {
        const Tensor& P = n.value;
        Tensor ga(P.rows(), P.cols());
        for (std::size_t i = 0; i < P.rows(); ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < P.cols(); ++j) dot += g(i, j) * P(i, j);
          for (std::size_t j = 0; j < P.cols(); ++j) ga(i, j) = P(i, j) * (g(i, j) - dot);
        }
        accumulate(n.a, ga);
        break;
      }
      case OpKind::concat_cols: {
        const Tensor& A = nodes_[static_cast<std::size_t>(n.a)].value;
        const Tensor& B = nodes_[static_cast<std::size_t>(n.b)].value;
        if (nodes_[static_cast<std::size_t>(n.a)].requires_grad) {
          Tensor ga(A.rows(), A.cols());
          for (std::size_t i = 0; i < A.rows(); ++i)
            for (std::size_t j = 0; j < A.cols(); ++j) ga(i, j) = g(i, j);
          accumulate(n.a, ga);
        }
        if (nodes_[static_cast<std::size_t>(n.b)].requires_grad) {
          Tensor gb(B.rows(), B.cols());
          for (std::size_t i = 0; i < B.rows(); ++i)
            for (std::size_t j = 0; j < B.cols(); ++j) gb(i, j) = g(i, A.cols() + j);
          accumulate(n.b, gb);
        }
        break;
      }
      case OpKind::mean: {
        const Tensor& A = nodes_[static_cast<std::size_t>(n.a)].value;
        Tensor ga(A.rows(), A.cols());
        const double s = g[0] / static_cast<double>(A.size());
        for (std::size_t i = 0; i < A.size(); ++i) ga[i] = s;
        accumulate(n.a, ga);
        break;
      }
      case OpKind::cross_entropy: {
        const Tensor& P = nodes_[static_cast<std::size_t>(n.a)].value;
        Tensor ga(P.rows(), P.cols());
        const double s = g[0] / static_cast<double>(P.rows());
        for (std::size_t i = 0; i < P.rows(); ++i) {
          const double p = P(i, static_cast<std::size_t>(n.labels[i]));
          if (p > kLogFloor) ga(i, static_cast<std::size_t>(n.labels[i])) = -s / p;
        }
        accumulate(n.a, ga);
        break;
      }
      case OpKind::elementwise_mul: {
        const Tensor& A = nodes_[static_cast<std::size_t>(n.a)].value;
        const Tensor& B = nodes_[static_cast<std::size_t>(n.b)].value;
        if (nodes_[static_cast<std::size_t>(n.a)].requires_grad) {
          Tensor ga(A.rows(), A.cols());
          for (std::size_t i = 0; i < A.size(); ++i) ga[i] = g[i] * B[i];
          accumulate(n.a, ga);
        }
        if (nodes_[static_cast<std::size_t>(n.b)].requires_grad) {
          Tensor gb(B.rows(), B.cols());
          for (std::size_t i = 0; i < B.size(); ++i) gb[i] = g[i] * A[i];
          accumulate(n.b, gb);
        }
        break;
      }
      case OpKind::scale: {
        const Tensor& A = nodes_[static_cast<std::size_t>(n.a)].value;
        Tensor ga(A.rows(), A.cols());
        for (std::size_t i = 0; i < A.size(); ++i) ga[i] = n.factor * g[i];
        accumulate(n.a, ga);
        break;
      }
      case OpKind::transpose: {
        Tensor ga(g.cols(), g.rows());
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) ga(j, i) = g(i, j);
        accumulate(n.a, ga);
        break;
      }
    }
  }

  std::vector<Node> nodes_;
};

}  // namespace degaa
