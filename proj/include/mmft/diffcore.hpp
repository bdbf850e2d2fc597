#pragma once

#include "mmft/errors.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace mmft {

using Scalar = double;
using Index = Eigen::Index;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// Extents of a dense array. Every value in the graph is rank <= 2; vectors
/// are stored as a single row and scalars as 1x1.
struct Shape {
  Index rows = 0;
  Index cols = 0;
  friend bool operator==(const Shape&, const Shape&) = default;
  std::string str() const;
};

inline Shape shape_of(const Matrix& m) { return {m.rows(), m.cols()}; }

class Parameter;
class ParameterStore;
class Tape;

/// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  const Matrix& grad() const;
  Shape shape() const { return shape_of(value()); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Scalar scalar() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Dynamic computation graph. Nodes are appended in evaluation order, so the
/// node list is already a topological order and backward() walks it once in
/// reverse.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var variable(Matrix value);
  /// Leaf holding a copy of the parameter value. Repeated calls for the same
  /// parameter return the same leaf.
  Var param(const Parameter& p);

  /// Records a node computed from `inputs`. The node requires a gradient when
  /// any input does; `backward` is only kept in that case.
  Var record(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward,
             const char* op);
  Var record(Matrix value, std::span<const Var> inputs, BackwardFn backward, const char* op);

  /// Seeds d(root)/d(root) = 1 and propagates to every node. `root` must be 1x1.
  void backward(Var root);

  /// Adds the gradient of every parameter leaf into `grads` (indexed by
  /// Parameter::index()). Leaves referring to the same parameter are summed.
  void accumulate_parameter_grads(std::span<Matrix> grads) const;
  /// Same, directly into the Parameter::grad fields of `store`.
  void accumulate_parameter_grads(ParameterStore& store) const;

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer of node `id`, zero-initialized on first use.
  Matrix& grad_buffer(std::size_t id);

  std::size_t size() const { return nodes_.size(); }

  /// When disabled, new nodes never require a gradient (inference mode).
  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  bool grad_enabled() const { return grad_enabled_; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    const Parameter* param = nullptr;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  bool grad_enabled_ = true;
};

// Matrix products. `a` is m x k and `b` is k x n.
Var matmul(Var a, Var b);
/// a * b^T, with `b` given as n x k.
Var matmul_nt(Var a, Var b);
/// x * W + b, with `bias` broadcast over rows.
Var linear(Var x, Var weight, Var bias);

// Elementwise family. add() broadcasts a 1 x n right operand over rows.
Var add(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, Scalar factor);
Var add_constant(Var a, const Matrix& c);
Var gelu(Var a);
Var sigmoid(Var a);

/// Row-wise softmax with max subtraction.
Var softmax(Var x);
/// Per-row normalization followed by gain/bias (both 1 x d).
Var layernorm(Var x, Var gain, Var bias, Scalar eps = 1e-12);

/// Gathers rows of `table`; index arguments are not differentiable.
Var embedding_lookup(Var table, std::span<const int> indices);
/// axis 0 stacks rows, axis 1 joins columns.
Var concat(std::span<const Var> parts, int axis);
Var concat(std::initializer_list<Var> parts, int axis);
Var slice_rows(Var x, Index begin, Index count);
Var slice_cols(Var x, Index begin, Index count);
/// Row-major reinterpretation with the same element count.
Var reshape(Var x, Index rows, Index cols);
/// axis 0 averages over rows (-> 1 x n), axis 1 over columns (-> m x 1).
Var mean(Var x, int axis);
Var sum(Var x);
Var add_n(std::span<const Var> terms);

/// Mean over rows of -log softmax(logits)[label].
Var cross_entropy(Var logits, std::span<const int> labels);

/// Row-wise softmax on plain values (no graph).
Matrix softmax_rows(const Matrix& x);

}  // namespace mmft
