#include "mmft/adam.hpp"
#include "mmft/diffcore.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

using namespace mmft;
using mmft::testing::op_gradient_error;
using mmft::testing::random_matrix;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index r = 0;
  for (const auto& row : rows) {
    Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

}  // namespace

TEST(Matmul, IdentityAndScalar) {
  Tape t;
  Var a = t.constant(mat({{1, 0}, {0, 1}}));
  Var b = t.constant(mat({{3, 4}, {5, 6}}));
  EXPECT_EQ(matmul(a, b).value(), mat({{3, 4}, {5, 6}}));
  EXPECT_EQ(matmul(t.constant(mat({{2}})), t.constant(mat({{3}}))).value(), mat({{6}}));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Tape t;
  Var a = t.constant(Matrix::Zero(2, 3));
  Var b = t.constant(Matrix::Zero(2, 3));
  try {
    matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos);
  }
}

TEST(Matmul, GradientOfSumMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  const Matrix a = random_matrix(3, 3, rng), b = random_matrix(3, 3, rng);
  Tape t;
  Var va = t.variable(a);
  Var vb = t.constant(b);
  t.backward(sum(matmul(va, vb)));
  auto f = [&](const std::vector<Matrix>& xs) { return (xs[0] * b).sum(); };
  Matrix numeric = mmft::testing::central_difference(f, {a}, 0);
  EXPECT_LT(mmft::testing::max_relative_error(va.grad(), numeric), 1e-6);
}

TEST(Softmax, UniformAndStable) {
  Tape t;
  Matrix u = softmax(t.constant(Matrix::Zero(1, 5))).value();
  for (Index i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(u(0, i), 0.2);
  Matrix s = softmax(t.constant(mat({{1000, 0}}))).value();
  EXPECT_NEAR(s(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(s(0, 1), 0.0, 1e-12);
}

TEST(Softmax, RowsSumToOneAndPositive) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Tape t;
    Matrix p = softmax(t.constant(random_matrix(4, 7, rng, 5.0))).value();
    for (Index r = 0; r < p.rows(); ++r) {
      EXPECT_NEAR(p.row(r).sum(), 1.0, 1e-9);
      EXPECT_GT(p.row(r).minCoeff(), 0.0);
    }
  }
}

TEST(Softmax, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  double err = op_gradient_error([](Tape&, const std::vector<Var>& x) { return softmax(x[0]); },
                                 {random_matrix(1, 7, rng)}, rng);
  EXPECT_LT(err, 1e-6);
}

TEST(CrossEntropy, AnalyticValues) {
  Tape t;
  const int label[] = {2};
  EXPECT_NEAR(cross_entropy(t.constant(Matrix::Zero(1, 5)), label).scalar(), std::log(5.0), 1e-12);
  Matrix confident = Matrix::Zero(1, 5);
  confident(0, 2) = 30;
  EXPECT_NEAR(cross_entropy(t.constant(confident), label).scalar(), 0.0, 1e-12);
}

TEST(CrossEntropy, MatchesDirectLogSumExp) {
  std::mt19937_64 rng(17);
  Matrix z = random_matrix(4, 5, rng, 3.0);
  const int labels[] = {0, 3, 4, 1};
  double expected = 0;
  for (Index r = 0; r < 4; ++r) {
    double s = 0;
    for (Index c = 0; c < 5; ++c) s += std::exp(z(r, c));
    expected += std::log(s) - z(r, labels[r]);
  }
  expected /= 4;
  Tape t;
  EXPECT_NEAR(cross_entropy(t.constant(z), labels).scalar(), expected, 1e-10);
}

TEST(CrossEntropy, LabelOutOfRange) {
  Tape t;
  const int bad[] = {5};
  EXPECT_THROW(cross_entropy(t.constant(Matrix::Zero(1, 5)), bad), LabelError);
  const int neg[] = {-1};
  EXPECT_THROW(cross_entropy(t.constant(Matrix::Zero(1, 5)), neg), LabelError);
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(23);
  const std::vector<int> labels{1, 4, 0};
  double err = op_gradient_error(
      [&](Tape&, const std::vector<Var>& x) { return cross_entropy(x[0], labels); }, {random_matrix(3, 5, rng)}, rng);
  EXPECT_LT(err, 1e-6);
}

TEST(LayerNorm, DegenerateRows) {
  Tape t;
  Var gain = t.constant(Matrix::Ones(1, 4));
  Var bias = t.constant(Matrix::Zero(1, 4));
  Matrix constant_row = layernorm(t.constant(Matrix::Constant(1, 4, 3.5)), gain, bias).value();
  EXPECT_LT(constant_row.cwiseAbs().maxCoeff(), 1e-12);

  Matrix normalized = mat({{1, -1, 1, -1}});
  Matrix out = layernorm(t.constant(normalized), gain, bias).value();
  EXPECT_LT((out - normalized).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(LayerNorm, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(29);
  double err = op_gradient_error(
      [](Tape&, const std::vector<Var>& x) { return layernorm(x[0], x[1], x[2]); },
      {random_matrix(3, 6, rng), random_matrix(1, 6, rng), random_matrix(1, 6, rng)}, rng);
  EXPECT_LT(err, 1e-5);
}

TEST(Elementwise, HadamardIdentityAndAnnihilator) {
  Tape t;
  Var x = t.constant(mat({{1, 2, 3}}));
  EXPECT_EQ(hadamard(x, t.constant(Matrix::Ones(1, 3))).value(), mat({{1, 2, 3}}));
  EXPECT_EQ(hadamard(x, t.constant(Matrix::Zero(1, 3))).value(), Matrix::Zero(1, 3));
  EXPECT_THROW(hadamard(x, t.constant(Matrix::Zero(1, 4))), DimensionError);
  EXPECT_THROW(add(x, t.constant(Matrix::Zero(2, 2))), DimensionError);
}

TEST(Elementwise, ConcatGradientSplitsExactly) {
  std::mt19937_64 rng(31);
  for (int axis : {0, 1}) {
    std::vector<Matrix> in = axis == 0
                                 ? std::vector<Matrix>{random_matrix(2, 3, rng), random_matrix(1, 3, rng)}
                                 : std::vector<Matrix>{random_matrix(2, 3, rng), random_matrix(2, 2, rng)};
    double err = op_gradient_error(
        [axis](Tape&, const std::vector<Var>& x) { return concat({x[0], x[1]}, axis); }, in, rng);
    EXPECT_LT(err, 1e-8);
  }
}

// Every differentiable op against central differences at random shapes.
TEST(Elementwise, AllOpsMatchFiniteDifferences) {
  std::mt19937_64 rng(37);
  using Op = std::function<Var(Tape&, const std::vector<Var>&)>;
  struct Case {
    const char* name;
    Op op;
    std::vector<Matrix> inputs;
  };
  const std::vector<int> idx{2, 0, 2, 1};
  std::vector<Case> cases = {
      {"matmul", [](Tape&, const auto& x) { return matmul(x[0], x[1]); }, {random_matrix(3, 4, rng), random_matrix(4, 2, rng)}},
      {"matmul_nt", [](Tape&, const auto& x) { return matmul_nt(x[0], x[1]); }, {random_matrix(3, 4, rng), random_matrix(5, 4, rng)}},
      {"linear", [](Tape&, const auto& x) { return linear(x[0], x[1], x[2]); },
       {random_matrix(3, 4, rng), random_matrix(4, 2, rng), random_matrix(1, 2, rng)}},
      {"add", [](Tape&, const auto& x) { return add(x[0], x[1]); }, {random_matrix(2, 3, rng), random_matrix(2, 3, rng)}},
      {"add_broadcast", [](Tape&, const auto& x) { return add(x[0], x[1]); }, {random_matrix(4, 3, rng), random_matrix(1, 3, rng)}},
      {"hadamard", [](Tape&, const auto& x) { return hadamard(x[0], x[1]); }, {random_matrix(2, 3, rng), random_matrix(2, 3, rng)}},
      {"scale", [](Tape&, const auto& x) { return scale(x[0], -1.7); }, {random_matrix(2, 3, rng)}},
      {"gelu", [](Tape&, const auto& x) { return gelu(x[0]); }, {random_matrix(3, 3, rng, 2.0)}},
      {"sigmoid", [](Tape&, const auto& x) { return sigmoid(x[0]); }, {random_matrix(3, 3, rng, 2.0)}},
      {"softmax", [](Tape&, const auto& x) { return softmax(x[0]); }, {random_matrix(3, 4, rng)}},
      {"embedding", [&](Tape&, const auto& x) { return embedding_lookup(x[0], idx); }, {random_matrix(3, 4, rng)}},
      {"slice_rows", [](Tape&, const auto& x) { return slice_rows(x[0], 1, 2); }, {random_matrix(4, 3, rng)}},
      {"slice_cols", [](Tape&, const auto& x) { return slice_cols(x[0], 1, 2); }, {random_matrix(3, 4, rng)}},
      {"reshape", [](Tape&, const auto& x) { return reshape(x[0], 1, 12); }, {random_matrix(3, 4, rng)}},
      {"mean0", [](Tape&, const auto& x) { return mean(x[0], 0); }, {random_matrix(3, 4, rng)}},
      {"mean1", [](Tape&, const auto& x) { return mean(x[0], 1); }, {random_matrix(3, 4, rng)}},
      {"sum", [](Tape&, const auto& x) { return sum(x[0]); }, {random_matrix(3, 4, rng)}},
      {"add_n", [](Tape&, const auto& x) { std::vector<Var> v{x[0], x[1], x[0]}; return add_n(v); },
       {random_matrix(2, 2, rng), random_matrix(2, 2, rng)}},
  };
  for (const auto& c : cases) {
    EXPECT_LT(op_gradient_error(c.op, c.inputs, rng), 1e-4) << c.name;
  }
}

TEST(Tape, SharedNodeAccumulates) {
  Tape t;
  Var x = t.variable(Matrix::Constant(1, 1, 3.0));
  t.backward(add(x, x));
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 2.0);
}

TEST(Tape, NonFiniteIsSurfaced) {
  Tape t;
  Var x = t.constant(Matrix::Constant(1, 1, 1e308));
  EXPECT_THROW(scale(x, 10.0), NumericError);
  Matrix bad = Matrix::Zero(1, 1);
  bad(0, 0) = std::nan("");
  EXPECT_THROW(t.constant(bad), NumericError);
}

TEST(Tape, GradientShapesMatchValues) {
  std::mt19937_64 rng(41);
  Tape t;
  Var a = t.variable(random_matrix(3, 4, rng));
  Var b = t.variable(random_matrix(4, 2, rng));
  Var y = sum(gelu(matmul(a, b)));
  t.backward(y);
  EXPECT_EQ(shape_of(a.grad()), a.shape());
  EXPECT_EQ(shape_of(b.grad()), b.shape());
}

// ---------------------------------------------------------------------------

TEST(Adam, StepMovesAgainstGradient) {
  ParameterStore ps;
  Parameter& w = ps.add("w", Matrix::Constant(1, 1, 1.0));
  Adam opt(ps, {0.1, 0.0});
  w.grad(0, 0) = 2.0;  // d(w^2)/dw at w=1
  opt.step(ps);
  EXPECT_LT(w.value(0, 0), 1.0);
  EXPECT_EQ(w.grad(0, 0), 0.0);
}

TEST(Adam, ZeroGradientNoDecayLeavesParameter) {
  ParameterStore ps;
  Parameter& w = ps.add("w", Matrix::Constant(2, 2, 0.37));
  Adam opt(ps, {0.1, 0.0});
  opt.step(ps);
  EXPECT_EQ(w.value, Matrix::Constant(2, 2, 0.37));
}

TEST(Adam, ZeroLearningRateIsBitIdentical) {
  std::mt19937_64 rng(43);
  ParameterStore ps;
  Parameter& w = ps.add("w", random_matrix(3, 3, rng));
  const Matrix before = w.value;
  Adam opt(ps, {0.0, 1e-5});
  for (int i = 0; i < 5; ++i) {
    w.grad = random_matrix(3, 3, rng);
    opt.step(ps);
  }
  EXPECT_EQ(std::memcmp(before.data(), w.value.data(), sizeof(double) * 9), 0);
}

TEST(Adam, ConvergesOnQuadratic) {
  // f(w) = (w0 - 1.5)^2 + 3 (w1 + 0.5)^2, minimizer (1.5, -0.5).
  ParameterStore ps;
  Parameter& w = ps.add("w", Matrix::Zero(1, 2));
  Adam opt(ps, {0.05, 0.0});
  for (int i = 0; i < 200; ++i) {
    w.grad(0, 0) = 2 * (w.value(0, 0) - 1.5);
    w.grad(0, 1) = 6 * (w.value(0, 1) + 0.5);
    opt.step(ps);
  }
  EXPECT_NEAR(w.value(0, 0), 1.5, 1e-3);
  EXPECT_NEAR(w.value(0, 1), -0.5, 1e-3);
}

TEST(Adam, DecoupledWeightDecay) {
  ParameterStore ps;
  Parameter& w = ps.add("w", Matrix::Constant(1, 1, 2.0));
  Adam opt(ps, {0.1, 0.5});
  opt.step(ps);  // zero gradient: only the decay term acts
  EXPECT_DOUBLE_EQ(w.value(0, 0), 2.0 - 0.1 * 0.5 * 2.0);
}
