#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "rau/gradcheck.hpp"
#include "rau/graph.hpp"
#include "test_support.hpp"

namespace rau {
namespace {

using testing::op_gradient_error;
using testing::probe;
using testing::random_tensor;

constexpr double kGradTol = 1e-7;

Parameter param(const char* name, Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  return Parameter(name, random_tensor(std::move(shape), seed, lo, hi));
}

// --- forward values ---------------------------------------------------------

TEST(GraphForwardTest, TanhMatchesLibraryScalar) {
  Graph g(false);
  Var y = ad::tanh(g.constant(Tensor::vector({0.0, 0.5, -0.5})));
  EXPECT_DOUBLE_EQ(y.value()[0], 0.0);
  EXPECT_NEAR(y.value()[1], 0.46211715726000974, 1e-15);
  EXPECT_NEAR(y.value()[2], -0.46211715726000974, 1e-15);
}

TEST(GraphForwardTest, ExpOfZeroIsOne) {
  Graph g(false);
  EXPECT_DOUBLE_EQ(ad::exp(g.constant(Tensor::vector({0.0}))).value()[0], 1.0);
}

TEST(GraphForwardTest, LogOfNonPositiveNamesIndex) {
  Graph g(false);
  try {
    ad::log(g.constant(Tensor::vector({1.0, 0.0})));
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("index 1"), std::string::npos);
  }
}

TEST(GraphForwardTest, LinearCombineHandValues) {
  Graph g(false);
  Var a = g.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  Var y = ad::linear_combine(a, g.constant(Tensor::vector({1, 1})), g.constant(Tensor::vector({1, 0})), false);
  EXPECT_EQ(y.value(), Tensor::vector({4, 7}));

  Var identity = g.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  Var z = ad::linear_combine(identity, g.constant(Tensor::vector({3, 4})), g.constant(Tensor::vector({0, 0})), true);
  EXPECT_EQ(z.value(), Tensor::vector({3, 4}));
}

TEST(GraphForwardTest, LinearCombineShapeErrorNamesBothShapes) {
  Graph g(false);
  Var a = g.constant(Tensor({2, 3}));
  try {
    ad::matmul(a, g.constant(Tensor({2})));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos);
    EXPECT_NE(msg.find("[2]"), std::string::npos);
  }
}

TEST(GraphForwardTest, SoftmaxValues) {
  Graph g(false);
  Var y = ad::softmax(g.constant(Tensor::vector({1, 2, 3})));
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  EXPECT_NEAR(y.value()[0], std::exp(1.0) / z, 1e-15);
  EXPECT_NEAR(y.value()[0], 0.090031, 1e-6);
  EXPECT_NEAR(y.value()[1], 0.244728, 1e-6);
  EXPECT_NEAR(y.value()[2], 0.665241, 1e-6);

  Var half = ad::softmax(g.constant(Tensor::vector({0, 0})));
  EXPECT_DOUBLE_EQ(half.value()[0], 0.5);
}

TEST(GraphForwardTest, SoftmaxShiftInvariantAndStable) {
  Graph g(false);
  Tensor scores = random_tensor({6, 5}, 4, -3, 3);
  Tensor shifted = scores;
  for (auto& v : shifted.values()) v += 700.0;
  Var a = ad::softmax(g.constant(scores));
  Var b = ad::softmax(g.constant(shifted));
  for (std::size_t i = 0; i < scores.size(); ++i) EXPECT_NEAR(a.value()[i], b.value()[i], 1e-12);
  for (std::size_t j = 0; j < 5; ++j) {
    double total = 0.0;
    for (std::size_t i = 0; i < 6; ++i) total += b.value().at(i, j);
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
  Var flat = ad::softmax(g.constant(Tensor({4}, 123.0)));
  for (double v : flat.value().values()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(GraphForwardTest, CrossEntropyClosedForms) {
  Graph g(false);
  Var half = g.constant(Tensor::vector({0.5, 0.5}));
  EXPECT_NEAR(ad::cross_entropy(half, g.constant(Tensor::vector({1, 0}))).value()[0], std::log(2.0), 1e-15);
  Var sure = g.constant(Tensor::vector({0, 1, 0}));
  EXPECT_DOUBLE_EQ(ad::cross_entropy(sure, sure).value()[0], 0.0);
  Var uniform = g.constant(Tensor({5}, 0.2));
  EXPECT_NEAR(ad::cross_entropy(uniform, g.constant(Tensor::vector({0, 0, 0, 1, 0}))).value()[0], std::log(5.0),
              1e-15);
}

TEST(GraphForwardTest, CrossEntropyRejectsNonOneHot) {
  Graph g(false);
  Var a = g.constant(Tensor::vector({0.5, 0.5}));
  EXPECT_THROW(ad::cross_entropy(a, g.constant(Tensor::vector({0.5, 0.5}))), ContractError);
  EXPECT_THROW(ad::cross_entropy(a, g.constant(Tensor::vector({1, 1}))), ContractError);
}

TEST(GraphForwardTest, CrossEntropyClampsZeroProbability) {
  Graph g(false);
  Var a = g.constant(Tensor::vector({1.0, 0.0}));
  EXPECT_NEAR(ad::cross_entropy(a, g.constant(Tensor::vector({0, 1}))).value()[0], -std::log(1e-12), 1e-9);
}

TEST(GraphForwardTest, RepeatReshapeTranspose) {
  Graph g(false);
  Var x = g.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  EXPECT_EQ(ad::repeat_cols(x, 2).value(), Tensor::matrix({{1, 1, 2, 2}, {3, 3, 4, 4}}));
  EXPECT_EQ(ad::transpose(x).value(), Tensor::matrix({{1, 3}, {2, 4}}));
  EXPECT_EQ(ad::reshape(x, {4}).value(), Tensor::vector({1, 2, 3, 4}));
}

TEST(GraphForwardTest, BlockWeightedSumPerExample) {
  Graph g(false);
  // Two examples of two locations each.
  Var maps = g.constant(Tensor::matrix({{1, 2, 10, 20}, {3, 4, 30, 40}}));
  Var w = g.constant(Tensor::matrix({{0.25, 1.0}, {0.75, 0.0}}));
  EXPECT_EQ(ad::block_weighted_sum(maps, w, 2).value(), Tensor::matrix({{1.75, 10}, {3.75, 30}}));
}

TEST(GraphForwardTest, EmbeddingLookupRejectsOutOfRange) {
  Graph g(false);
  Var table = g.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  const std::size_t ids[] = {1, 0, 1};
  EXPECT_EQ(ad::embedding_lookup(table, ids).value(), Tensor::matrix({{3, 1, 3}, {4, 2, 4}}));
  const std::size_t bad[] = {2};
  EXPECT_THROW(ad::embedding_lookup(table, bad), ContractError);
}

TEST(GraphForwardTest, ConcatSelectSlice) {
  Graph g(false);
  Var a = g.constant(Tensor::matrix({{1, 2}}));
  Var b = g.constant(Tensor::matrix({{3, 4}, {5, 6}}));
  const Var rows[] = {a, b};
  Var stacked = ad::concat_rows(rows);
  EXPECT_EQ(stacked.value(), Tensor::matrix({{1, 2}, {3, 4}, {5, 6}}));
  EXPECT_EQ(ad::slice_rows(stacked, 1, 2).value(), b.value());
  const Var cols[] = {b, b};
  EXPECT_EQ(ad::concat_cols(cols).value(), Tensor::matrix({{3, 4, 3, 4}, {5, 6, 5, 6}}));
  const std::size_t order[] = {1, 0, 1};
  EXPECT_EQ(ad::select_cols(b, order).value(), Tensor::matrix({{4, 3, 4}, {6, 5, 6}}));
}

TEST(GraphForwardTest, LstmPointwiseClosedForm) {
  Graph g(false);
  // Gates i, f, o, g pre-activations for a single unit.
  Var pre = g.constant(Tensor::vector({0.3, -0.2, 0.5, 0.7}));
  Var c = g.constant(Tensor::vector({0.4}));
  const Tensor out = ad::lstm_pointwise(pre, c).value();
  auto s = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  const double cell = s(-0.2) * 0.4 + s(0.3) * std::tanh(0.7);
  EXPECT_NEAR(out[1], cell, 1e-15);
  EXPECT_NEAR(out[0], s(0.5) * std::tanh(cell), 1e-15);
}

// --- backward ---------------------------------------------------------------

TEST(GraphBackwardTest, SumGivesOnes) {
  Parameter x("x", random_tensor({3, 2}, 1));
  Graph g;
  g.backward(ad::sum(g.parameter(x)));
  for (double v : x.grad.values()) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(GraphBackwardTest, SquareOfThree) {
  Parameter x("x", Tensor::vector({3.0}));
  Graph g;
  Var v = g.parameter(x);
  g.backward(ad::mul(v, v));
  EXPECT_DOUBLE_EQ(x.grad[0], 6.0);
}

TEST(GraphBackwardTest, NonScalarLossRejected) {
  Parameter x("x", Tensor({2}));
  Graph g;
  EXPECT_THROW(g.backward(g.parameter(x)), ContractError);
}

TEST(GraphBackwardTest, SharedParameterGradientsAdd) {
  Parameter w("w", random_tensor({3, 3}, 2));
  const Tensor x1 = random_tensor({3}, 3), x2 = random_tensor({3}, 4);
  auto single = [&](const Tensor& x) {
    w.zero_grad();
    Graph g;
    g.backward(probe(ad::tanh(ad::matmul(g.parameter(w), g.constant(x)))));
    return w.grad;
  };
  const Tensor g1 = single(x1), g2 = single(x2);
  w.zero_grad();
  Graph g;
  Var wv = g.parameter(w);
  Var both = ad::add(probe(ad::tanh(ad::matmul(wv, g.constant(x1)))), probe(ad::tanh(ad::matmul(wv, g.constant(x2)))));
  g.backward(both);
  for (std::size_t i = 0; i < w.grad.size(); ++i) EXPECT_NEAR(w.grad[i], g1[i] + g2[i], 1e-15);
}

TEST(GraphBackwardTest, GradientsAccumulateAcrossGraphs) {
  Parameter x("x", Tensor::vector({2.0}));
  for (int i = 0; i < 2; ++i) {
    Graph g;
    g.backward(ad::mul_scalar(g.parameter(x), 3.0));
  }
  EXPECT_DOUBLE_EQ(x.grad[0], 6.0);
}

TEST(GraphBackwardTest, DeterministicReplay) {
  Parameter w("w", random_tensor({4, 3}, 5));
  auto run = [&]() {
    w.zero_grad();
    Graph g;
    Var y = ad::softmax(ad::matmul(g.parameter(w), g.constant(random_tensor({3, 2}, 6))));
    g.backward(probe(y));
    return std::make_pair(y.value(), w.grad);
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(GraphBackwardTest, NoRecordGraphRefusesBackward) {
  Parameter x("x", Tensor::vector({1.0}));
  Graph g(false);
  EXPECT_THROW(g.backward(ad::sum(g.parameter(x))), ContractError);
}

struct UnaryCase {
  const char* name;
  ad::UnaryKind kind;
  double lo;
};

class UnaryGradientTest : public ::testing::TestWithParam<UnaryCase> {};

TEST_P(UnaryGradientTest, MatchesFiniteDifferences) {
  const auto c = GetParam();
  std::vector<Parameter> in = {param("x", {3, 4}, 7, c.lo, 1.5)};
  const double err = op_gradient_error(in, [&](Graph&, std::vector<Var>& v) {
    return probe(ad::elementwise(c.kind, v[0], 0.7));
  });
  EXPECT_LT(err, kGradTol) << c.name;
}

INSTANTIATE_TEST_SUITE_P(AllKinds, UnaryGradientTest,
                         ::testing::Values(UnaryCase{"tanh", ad::UnaryKind::Tanh, -1.5},
                                           UnaryCase{"exp", ad::UnaryKind::Exp, -1.5},
                                           UnaryCase{"log", ad::UnaryKind::Log, 0.2},
                                           UnaryCase{"negate", ad::UnaryKind::Negate, -1.5},
                                           UnaryCase{"add_scalar", ad::UnaryKind::AddScalar, -1.5},
                                           UnaryCase{"mul_scalar", ad::UnaryKind::MulScalar, -1.5},
                                           UnaryCase{"sigmoid", ad::UnaryKind::Sigmoid, -1.5}));

TEST(GraphGradientTest, BinaryOps) {
  std::vector<Parameter> in = {param("a", {3, 2}, 8), param("b", {3, 2}, 9)};
  EXPECT_LT(op_gradient_error(in, [](Graph&, auto& v) { return probe(ad::add(v[0], v[1])); }), kGradTol);
  EXPECT_LT(op_gradient_error(in, [](Graph&, auto& v) { return probe(ad::sub(v[0], v[1])); }), kGradTol);
  EXPECT_LT(op_gradient_error(in, [](Graph&, auto& v) { return probe(ad::mul(v[0], v[1])); }), kGradTol);
}

TEST(GraphGradientTest, Matmul) {
  std::vector<Parameter> in = {param("a", {5, 3}, 10), param("b", {3, 4}, 11)};
  EXPECT_LT(op_gradient_error(in, [](Graph&, auto& v) { return probe(ad::matmul(v[0], v[1])); }), kGradTol);
  std::vector<Parameter> vec = {param("a", {5, 3}, 12), param("x", {3}, 13)};
  EXPECT_LT(op_gradient_error(vec, [](Graph&, auto& v) { return probe(ad::matmul(v[0], v[1])); }), kGradTol);
}

TEST(GraphGradientTest, LinearCombineBothModes) {
  std::vector<Parameter> bc = {param("a", {4, 3}, 14), param("x", {3, 5}, 15), param("b", {4}, 16)};
  EXPECT_LT(op_gradient_error(bc, [](Graph&, auto& v) { return probe(ad::linear_combine(v[0], v[1], v[2], true)); }),
            kGradTol);
  std::vector<Parameter> full = {param("a", {4, 3}, 17), param("x", {3, 5}, 18), param("b", {4, 5}, 19)};
  EXPECT_LT(
      op_gradient_error(full, [](Graph&, auto& v) { return probe(ad::linear_combine(v[0], v[1], v[2], false)); }),
      kGradTol);
  std::vector<Parameter> col = {param("x", {4, 5}, 20), param("b", {4}, 21)};
  EXPECT_LT(op_gradient_error(col, [](Graph&, auto& v) { return probe(ad::add_column(v[0], v[1])); }), kGradTol);
}

TEST(GraphGradientTest, SoftmaxCrossEntropyIsAMinusY) {
  Parameter x("x", Tensor::vector({0.3, -1.2, 2.0, 0.1}));
  const Tensor y = Tensor::vector({0, 0, 1, 0});
  Graph g;
  Var a = ad::softmax(g.parameter(x));
  g.backward(ad::cross_entropy(a, g.constant(y)));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(x.grad[i], a.value()[i] - y[i], 1e-15);

  auto f = [&](const Tensor& t) {
    Graph h(false);
    return ad::cross_entropy(ad::softmax(h.constant(t)), h.constant(y)).value()[0];
  };
  const Tensor numeric = finite_diff_oracle(f, x.value);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(numeric[i], a.value()[i] - y[i], 1e-6);
}

TEST(GraphGradientTest, SoftmaxAndLabelCrossEntropy) {
  std::vector<Parameter> in = {param("x", {5, 3}, 22, -2, 2)};
  EXPECT_LT(op_gradient_error(in, [](Graph&, auto& v) { return probe(ad::softmax(v[0])); }), kGradTol);
  const std::size_t labels[] = {4, 0, 2};
  EXPECT_LT(op_gradient_error(in, [&](Graph&, auto& v) { return ad::cross_entropy_labels(ad::softmax(v[0]), labels); }),
            kGradTol);
}

TEST(GraphGradientTest, ShapeOps) {
  std::vector<Parameter> in = {param("x", {3, 4}, 23)};
  EXPECT_LT(op_gradient_error(in, [](Graph&, auto& v) { return probe(ad::repeat_cols(v[0], 3)); }), kGradTol);
  EXPECT_LT(op_gradient_error(in, [](Graph&, auto& v) { return probe(ad::reshape(v[0], {2, 6})); }), kGradTol);
  EXPECT_LT(op_gradient_error(in, [](Graph&, auto& v) { return probe(ad::transpose(v[0])); }), kGradTol);
  EXPECT_LT(op_gradient_error(in, [](Graph&, auto& v) { return probe(ad::slice_rows(v[0], 1, 2)); }), kGradTol);
  const std::size_t order[] = {3, 3, 0};
  EXPECT_LT(op_gradient_error(in, [&](Graph&, auto& v) { return probe(ad::select_cols(v[0], order)); }), kGradTol);
}

TEST(GraphGradientTest, ConcatOps) {
  std::vector<Parameter> in = {param("a", {2, 3}, 24), param("b", {4, 3}, 25)};
  EXPECT_LT(op_gradient_error(in, [](Graph&, auto& v) { return probe(ad::concat_rows(v)); }), kGradTol);
  std::vector<Parameter> wide = {param("a", {3, 2}, 26), param("b", {3, 1}, 27)};
  EXPECT_LT(op_gradient_error(wide, [](Graph&, auto& v) { return probe(ad::concat_cols(v)); }), kGradTol);
}

TEST(GraphGradientTest, BlockWeightedSumAndEmbedding) {
  std::vector<Parameter> in = {param("g", {3, 8}, 28), param("w", {4, 2}, 29)};
  EXPECT_LT(op_gradient_error(in, [](Graph&, auto& v) { return probe(ad::block_weighted_sum(v[0], v[1], 4)); }),
            kGradTol);
  std::vector<Parameter> table = {param("e", {5, 3}, 30)};
  const std::size_t ids[] = {4, 1, 4, 0};
  EXPECT_LT(op_gradient_error(table, [&](Graph&, auto& v) { return probe(ad::embedding_lookup(v[0], ids)); }),
            kGradTol);
}

TEST(GraphGradientTest, LstmPointwise) {
  std::vector<Parameter> in = {param("pre", {12, 2}, 31, -2, 2), param("c", {3, 2}, 32)};
  EXPECT_LT(op_gradient_error(in, [](Graph&, auto& v) { return probe(ad::lstm_pointwise(v[0], v[1])); }), kGradTol);
}

TEST(GradCheckTest, OracleOnSimpleFunctions) {
  const Tensor x = random_tensor({3, 2}, 33);
  const Tensor ones = finite_diff_oracle([](const Tensor& t) { return t.sum(); }, x);
  for (double v : ones.values()) EXPECT_NEAR(v, 1.0, 1e-9);
  const Tensor half = finite_diff_oracle([](const Tensor& t) { return 0.5 * t.squared_norm(); },
                                         Tensor::vector({1.0, 2.0}));
  EXPECT_NEAR(half[0], 1.0, 1e-8);
  EXPECT_NEAR(half[1], 2.0, 1e-8);
}

TEST(GradCheckTest, ParameterRestoredExactly) {
  Parameter p("p", random_tensor({4}, 34));
  const Tensor before = p.value;
  finite_diff_parameter([&]() { return std::sin(p.value[0]) + p.value.squared_norm(); }, p);
  EXPECT_EQ(p.value, before);
}

TEST(GradCheckTest, RelativeErrorUsesUnitFloor) {
  EXPECT_DOUBLE_EQ(max_relative_error(Tensor::vector({0.5}), Tensor::vector({0.25})), 0.25);
  EXPECT_DOUBLE_EQ(max_relative_error(Tensor::vector({30.0}), Tensor::vector({20.0})), 0.5);
}

}  // namespace
}  // namespace rau
