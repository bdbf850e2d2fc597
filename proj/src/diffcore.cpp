#include "mmft/diffcore.hpp"

#include "mmft/parameters.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace mmft {

std::string Shape::str() const {
  std::ostringstream os;
  os << "[" << rows << "x" << cols << "]";
  return os.str();
}

namespace {

void check_finite(const Matrix& m, const char* op) {
  // x * 0 is 0 for finite x and NaN otherwise.
  Scalar probe = 0;
  const Scalar* d = m.data();
  for (Index i = 0; i < m.size(); ++i) probe += d[i] * 0.0;
  if (probe != 0) {
    throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

[[noreturn]] void dimension_error(const char* op, Shape a, Shape b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + a.str() + " and " + b.str());
}

Tape& same_tape(std::initializer_list<Var> vars) {
  Tape* t = nullptr;
  for (const Var& v : vars) {
    if (!v.valid()) throw std::invalid_argument("operation on an empty Var");
    if (t != nullptr && v.tape() != t) throw std::invalid_argument("Vars belong to different tapes");
    t = v.tape();
  }
  return *t;
}

}  // namespace

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }

Scalar Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw DimensionError("scalar(): expected 1x1, got " + shape_of(v).str());
  return v(0, 0);
}

Var Tape::constant(Matrix value) {
  check_finite(value, "constant");
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return {this, nodes_.size() - 1};
}

Var Tape::variable(Matrix value) {
  check_finite(value, "variable");
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, grad_enabled_});
  return {this, nodes_.size() - 1};
}

Var Tape::param(const Parameter& p) {
  auto [it, fresh] = param_nodes_.try_emplace(&p, nodes_.size());
  if (!fresh) return {this, it->second};
  // Copied so the graph stays valid while the optimizer mutates the store.
  nodes_.push_back(Node{p.value, {}, {}, &p, grad_enabled_});
  return {this, nodes_.size() - 1};
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward,
                 const char* op) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward), op);
}

Var Tape::record(Matrix value, std::span<const Var> inputs, BackwardFn backward, const char* op) {
  check_finite(value, op);
  bool needs = false;
  if (grad_enabled_) {
    for (const Var& v : inputs) needs = needs || nodes_[v.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : BackwardFn{}, nullptr, needs});
  return {this, nodes_.size() - 1};
}

Matrix& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0 && n.value.size() != 0) {
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

void Tape::backward(Var root) {
  if (root.tape() != this) throw std::invalid_argument("backward: root belongs to another tape");
  if (value(root.id()).size() != 1) {
    throw DimensionError("backward: root must be 1x1, got " + shape_of(value(root.id())).str());
  }
  for (Node& n : nodes_) n.grad.resize(0, 0);
  if (!nodes_[root.id()].requires_grad) return;
  grad_buffer(root.id())(0, 0) = 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward || n.grad.size() == 0) continue;
    n.backward(*this, i);
  }
}

void Tape::accumulate_parameter_grads(std::span<Matrix> grads) const {
  for (const Node& n : nodes_) {
    if (n.param == nullptr || n.grad.size() == 0) continue;
    grads[n.param->index()] += n.grad;
  }
}

void Tape::accumulate_parameter_grads(ParameterStore& store) const {
  for (const Node& n : nodes_) {
    if (n.param == nullptr || n.grad.size() == 0) continue;
    store[n.param->index()].grad += n.grad;
  }
}

// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& t = same_tape({a, b});
  if (a.cols() != b.rows()) dimension_error("matmul", a.shape(), b.shape());
  Matrix out = a.value() * b.value();
  return t.record(std::move(out), {a, b}, [ia = a.id(), ib = b.id()](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.grad_buffer(ia).noalias() += g * tp.value(ib).transpose();
    if (tp.requires_grad(ib)) tp.grad_buffer(ib).noalias() += tp.value(ia).transpose() * g;
  }, "matmul");
}

Var matmul_nt(Var a, Var b) {
  Tape& t = same_tape({a, b});
  if (a.cols() != b.cols()) dimension_error("matmul_nt", a.shape(), b.shape());
  Matrix out = a.value() * b.value().transpose();
  return t.record(std::move(out), {a, b}, [ia = a.id(), ib = b.id()](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.grad_buffer(ia).noalias() += g * tp.value(ib);
    if (tp.requires_grad(ib)) tp.grad_buffer(ib).noalias() += g.transpose() * tp.value(ia);
  }, "matmul_nt");
}

Var linear(Var x, Var weight, Var bias) {
  Tape& t = same_tape({x, weight, bias});
  if (x.cols() != weight.rows()) dimension_error("linear", x.shape(), weight.shape());
  if (bias.rows() != 1 || bias.cols() != weight.cols()) dimension_error("linear bias", weight.shape(), bias.shape());
  Matrix out = x.value() * weight.value();
  out.rowwise() += bias.value().row(0);
  return t.record(std::move(out), {x, weight, bias},
                  [ix = x.id(), iw = weight.id(), ib = bias.id()](Tape& tp, std::size_t self) {
                    const Matrix& g = tp.grad(self);
                    if (tp.requires_grad(ix)) tp.grad_buffer(ix).noalias() += g * tp.value(iw).transpose();
                    if (tp.requires_grad(iw)) tp.grad_buffer(iw).noalias() += tp.value(ix).transpose() * g;
                    if (tp.requires_grad(ib)) tp.grad_buffer(ib) += g.colwise().sum();
                  }, "linear");
}

Var add(Var a, Var b) {
  Tape& t = same_tape({a, b});
  if (a.shape() == b.shape()) {
    Matrix out = a.value() + b.value();
    return t.record(std::move(out), {a, b}, [ia = a.id(), ib = b.id()](Tape& tp, std::size_t self) {
      const Matrix& g = tp.grad(self);
      if (tp.requires_grad(ia)) tp.grad_buffer(ia) += g;
      if (tp.requires_grad(ib)) tp.grad_buffer(ib) += g;
    }, "add");
  }
  if (b.rows() == 1 && b.cols() == a.cols()) {
    Matrix out = a.value();
    out.rowwise() += b.value().row(0);
    return t.record(std::move(out), {a, b}, [ia = a.id(), ib = b.id()](Tape& tp, std::size_t self) {
      const Matrix& g = tp.grad(self);
      if (tp.requires_grad(ia)) tp.grad_buffer(ia) += g;
      if (tp.requires_grad(ib)) tp.grad_buffer(ib) += g.colwise().sum();
    }, "add");
  }
  dimension_error("add", a.shape(), b.shape());
}

Var hadamard(Var a, Var b) {
  Tape& t = same_tape({a, b});
  if (a.shape() != b.shape()) dimension_error("hadamard", a.shape(), b.shape());
  Matrix out = a.value().cwiseProduct(b.value());
  return t.record(std::move(out), {a, b}, [ia = a.id(), ib = b.id()](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.grad_buffer(ia) += g.cwiseProduct(tp.value(ib));
    if (tp.requires_grad(ib)) tp.grad_buffer(ib) += g.cwiseProduct(tp.value(ia));
  }, "hadamard");
}

Var scale(Var a, Scalar factor) {
  Tape& t = same_tape({a});
  Matrix out = a.value() * factor;
  return t.record(std::move(out), {a}, [ia = a.id(), factor](Tape& tp, std::size_t self) {
    tp.grad_buffer(ia) += factor * tp.grad(self);
  }, "scale");
}

Var add_constant(Var a, const Matrix& c) {
  Tape& t = same_tape({a});
  Matrix out;
  if (shape_of(c) == a.shape()) {
    out = a.value() + c;
  } else if (c.rows() == 1 && c.cols() == a.cols()) {
    out = a.value();
    out.rowwise() += c.row(0);
  } else {
    dimension_error("add_constant", a.shape(), shape_of(c));
  }
  return t.record(std::move(out), {a}, [ia = a.id()](Tape& tp, std::size_t self) {
    tp.grad_buffer(ia) += tp.grad(self);
  }, "add_constant");
}

Var gelu(Var a) {
  Tape& t = same_tape({a});
  const Scalar inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  Matrix out = a.value().unaryExpr([&](Scalar x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); });
  return t.record(std::move(out), {a}, [ia = a.id(), inv_sqrt2](Tape& tp, std::size_t self) {
    const Scalar inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    Matrix d = tp.value(ia).unaryExpr([&](Scalar x) {
      return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
    });
    tp.grad_buffer(ia) += tp.grad(self).cwiseProduct(d);
  }, "gelu");
}

Var sigmoid(Var a) {
  Tape& t = same_tape({a});
  Matrix out = a.value().unaryExpr([](Scalar x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  });
  return t.record(std::move(out), {a}, [ia = a.id()](Tape& tp, std::size_t self) {
    const Matrix& s = tp.value(self);
    tp.grad_buffer(ia).array() += tp.grad(self).array() * s.array() * (1.0 - s.array());
  }, "sigmoid");
}

Matrix softmax_rows(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar m = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

Var softmax(Var x) {
  Tape& t = same_tape({x});
  if (x.cols() < 1) throw DimensionError("softmax: empty last axis");
  return t.record(softmax_rows(x.value()), {x}, [ix = x.id()](Tape& tp, std::size_t self) {
    const Matrix& y = tp.value(self);
    const Matrix& g = tp.grad(self);
    Eigen::VectorXd dots = g.cwiseProduct(y).rowwise().sum();
    Matrix& dx = tp.grad_buffer(ix);
    for (Index r = 0; r < y.rows(); ++r) {
      dx.row(r).array() += y.row(r).array() * (g.row(r).array() - dots(r));
    }
  }, "softmax");
}

Var layernorm(Var x, Var gain, Var bias, Scalar eps) {
  Tape& t = same_tape({x, gain, bias});
  const Index d = x.cols();
  if (d < 1) throw DimensionError("layernorm: empty last axis");
  if (gain.shape() != Shape{1, d}) dimension_error("layernorm gain", x.shape(), gain.shape());
  if (bias.shape() != Shape{1, d}) dimension_error("layernorm bias", x.shape(), bias.shape());

  const Matrix& xv = x.value();
  Matrix normalized(xv.rows(), d);
  Eigen::VectorXd inv_std(xv.rows());
  for (Index r = 0; r < xv.rows(); ++r) {
    const Scalar mu = xv.row(r).mean();
    auto centered = (xv.row(r).array() - mu);
    const Scalar var = centered.square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    normalized.row(r) = (centered * inv_std(r)).matrix();
  }
  Matrix out = normalized.array().rowwise() * gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);

  return t.record(std::move(out), {x, gain, bias},
                  [ix = x.id(), ig = gain.id(), ib = bias.id(), normalized = std::move(normalized),
                   inv_std = std::move(inv_std)](Tape& tp, std::size_t self) {
                    const Matrix& g = tp.grad(self);
                    if (tp.requires_grad(ig)) tp.grad_buffer(ig) += g.cwiseProduct(normalized).colwise().sum();
                    if (tp.requires_grad(ib)) tp.grad_buffer(ib) += g.colwise().sum();
                    if (!tp.requires_grad(ix)) return;
                    const Index n = normalized.cols();
                    Matrix dxhat = g.array().rowwise() * tp.value(ig).row(0).array();
                    Matrix& dx = tp.grad_buffer(ix);
                    for (Index r = 0; r < g.rows(); ++r) {
                      const Scalar s1 = dxhat.row(r).sum();
                      const Scalar s2 = dxhat.row(r).dot(normalized.row(r));
                      dx.row(r).array() += (inv_std(r) / static_cast<Scalar>(n)) *
                                           (static_cast<Scalar>(n) * dxhat.row(r).array() - s1 -
                                            normalized.row(r).array() * s2);
                    }
                  }, "layernorm");
}

Var embedding_lookup(Var table, std::span<const int> indices) {
  Tape& t = same_tape({table});
  const Matrix& tv = table.value();
  Matrix out(static_cast<Index>(indices.size()), tv.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= tv.rows()) {
      throw std::out_of_range("embedding_lookup: index " + std::to_string(indices[i]) +
                              " outside table of " + std::to_string(tv.rows()) + " rows");
    }
    out.row(static_cast<Index>(i)) = tv.row(indices[i]);
  }
  std::vector<int> idx(indices.begin(), indices.end());
  return t.record(std::move(out), {table}, [it = table.id(), idx = std::move(idx)](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    Matrix& dt = tp.grad_buffer(it);
    for (std::size_t i = 0; i < idx.size(); ++i) dt.row(idx[i]) += g.row(static_cast<Index>(i));
  }, "embedding_lookup");
}

Var concat(std::initializer_list<Var> parts, int axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  if (axis != 0 && axis != 1) throw DimensionError("concat: axis must be 0 or 1");
  Tape& t = *parts.front().tape();
  Index rows = 0, cols = 0;
  std::vector<Index> offsets;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw std::invalid_argument("Vars belong to different tapes");
    if (axis == 0) {
      if (!offsets.empty() && p.cols() != cols) dimension_error("concat", parts.front().shape(), p.shape());
      offsets.push_back(rows);
      rows += p.rows();
      cols = p.cols();
    } else {
      if (!offsets.empty() && p.rows() != rows) dimension_error("concat", parts.front().shape(), p.shape());
      offsets.push_back(cols);
      cols += p.cols();
      rows = p.rows();
    }
  }
  Matrix out(rows, cols);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Matrix& v = parts[i].value();
    if (axis == 0) out.middleRows(offsets[i], v.rows()) = v;
    else out.middleCols(offsets[i], v.cols()) = v;
  }
  std::vector<std::size_t> ids;
  for (const Var& p : parts) ids.push_back(p.id());
  return t.record(std::move(out), parts, [ids, offsets, axis](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!tp.requires_grad(ids[i])) continue;
      const Matrix& v = tp.value(ids[i]);
      Matrix& d = tp.grad_buffer(ids[i]);
      if (axis == 0) d += g.middleRows(offsets[i], v.rows());
      else d += g.middleCols(offsets[i], v.cols());
    }
  }, "concat");
}

Var slice_rows(Var x, Index begin, Index count) {
  Tape& t = same_tape({x});
  if (begin < 0 || count < 0 || begin + count > x.rows()) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                         ") outside " + x.shape().str());
  }
  Matrix out = x.value().middleRows(begin, count);
  return t.record(std::move(out), {x}, [ix = x.id(), begin, count](Tape& tp, std::size_t self) {
    tp.grad_buffer(ix).middleRows(begin, count) += tp.grad(self);
  }, "slice_rows");
}

Var slice_cols(Var x, Index begin, Index count) {
  Tape& t = same_tape({x});
  if (begin < 0 || count < 0 || begin + count > x.cols()) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                         ") outside " + x.shape().str());
  }
  Matrix out = x.value().middleCols(begin, count);
  return t.record(std::move(out), {x}, [ix = x.id(), begin, count](Tape& tp, std::size_t self) {
    tp.grad_buffer(ix).middleCols(begin, count) += tp.grad(self);
  }, "slice_cols");
}

Var reshape(Var x, Index rows, Index cols) {
  Tape& t = same_tape({x});
  if (rows * cols != x.value().size()) dimension_error("reshape", x.shape(), Shape{rows, cols});
  Matrix out = Eigen::Map<const Matrix>(x.value().data(), rows, cols);
  return t.record(std::move(out), {x}, [ix = x.id()](Tape& tp, std::size_t self) {
    Matrix& d = tp.grad_buffer(ix);
    Eigen::Map<Matrix>(d.data(), tp.grad(self).rows(), tp.grad(self).cols()) += tp.grad(self);
  }, "reshape");
}

Var mean(Var x, int axis) {
  Tape& t = same_tape({x});
  if (axis != 0 && axis != 1) throw DimensionError("mean: axis must be 0 or 1");
  if (x.value().size() == 0) throw DimensionError("mean: empty input");
  Matrix out = axis == 0 ? Matrix(x.value().colwise().mean()) : Matrix(x.value().rowwise().mean());
  return t.record(std::move(out), {x}, [ix = x.id(), axis](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    Matrix& d = tp.grad_buffer(ix);
    if (axis == 0) d.rowwise() += g.row(0) / static_cast<Scalar>(d.rows());
    else d.colwise() += g.col(0) / static_cast<Scalar>(d.cols());
  }, "mean");
}

Var sum(Var x) {
  Tape& t = same_tape({x});
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return t.record(std::move(out), {x}, [ix = x.id()](Tape& tp, std::size_t self) {
    tp.grad_buffer(ix).array() += tp.grad(self)(0, 0);
  }, "sum");
}

Var add_n(std::span<const Var> terms) {
  if (terms.empty()) throw DimensionError("add_n: no inputs");
  Tape& t = *terms.front().tape();
  Matrix out = terms.front().value();
  for (std::size_t i = 1; i < terms.size(); ++i) {
    if (terms[i].shape() != terms.front().shape()) dimension_error("add_n", terms.front().shape(), terms[i].shape());
    out += terms[i].value();
  }
  std::vector<std::size_t> ids;
  for (const Var& v : terms) ids.push_back(v.id());
  return t.record(std::move(out), terms, [ids](Tape& tp, std::size_t self) {
    for (std::size_t id : ids) {
      if (tp.requires_grad(id)) tp.grad_buffer(id) += tp.grad(self);
    }
  }, "add_n");
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  Tape& t = same_tape({logits});
  const Matrix& z = logits.value();
  if (static_cast<Index>(labels.size()) != z.rows()) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                         logits.shape().str());
  }
  for (int l : labels) {
    if (l < 0 || l >= z.cols()) {
      throw LabelError("cross_entropy: label " + std::to_string(l) + " outside [0," + std::to_string(z.cols()) + ")");
    }
  }
  Matrix probs = softmax_rows(z);
  Scalar total = 0;
  for (Index r = 0; r < z.rows(); ++r) {
    const Scalar m = z.row(r).maxCoeff();
    const Scalar lse = m + std::log((z.row(r).array() - m).exp().sum());
    total += lse - z(r, labels[static_cast<std::size_t>(r)]);
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<Scalar>(z.rows());
  std::vector<int> lab(labels.begin(), labels.end());
  return t.record(std::move(out), {logits},
                  [iz = logits.id(), probs = std::move(probs), lab = std::move(lab)](Tape& tp, std::size_t self) {
                    const Scalar g = tp.grad(self)(0, 0) / static_cast<Scalar>(probs.rows());
                    Matrix& d = tp.grad_buffer(iz);
                    d += g * probs;
                    for (std::size_t r = 0; r < lab.size(); ++r) d(static_cast<Index>(r), lab[r]) -= g;
                  }, "cross_entropy");
}

}  // namespace mmft
