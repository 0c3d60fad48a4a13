#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "onnkit/autograd.hpp"
#include "onnkit/gradcheck.hpp"
#include "support.hpp"

using namespace onnkit;
using testing_support::random_tensor;
using testing_support::throws_code;

TEST(Autograd, ProductRule) {
  ag::Tape tape;
  const auto x = tape.leaf(Tensor::scalar(2.0));
  const auto y = tape.leaf(Tensor::scalar(3.0));
  const auto z = x * y;
  const auto g = tape.backward(z);
  EXPECT_EQ(g.of(x).item(), 3.0);
  EXPECT_EQ(g.of(y).item(), 2.0);
}

TEST(Autograd, ConstantsRecordNoNode) {
  ag::Tape tape;
  const auto a = tape.constant(Tensor::scalar(2.0));
  const auto b = tape.constant(Tensor::scalar(5.0));
  const std::size_t before = tape.size();
  const auto c = ag::sin(a * b);
  EXPECT_FALSE(c.tracked());
  EXPECT_EQ(tape.size(), before);
  EXPECT_DOUBLE_EQ(c.value().item(), std::sin(10.0));
}

TEST(Autograd, RootErrors) {
  ag::Tape tape;
  const auto x = tape.leaf(Tensor({2}, 1.0));
  EXPECT_TRUE(throws_code([&] { tape.backward(ag::square(x)); }, ErrorCode::NonScalarRoot));
  const auto c = tape.constant(Tensor::scalar(1.0));
  EXPECT_TRUE(throws_code([&] { tape.backward(c); }, ErrorCode::DetachedRoot));
}

TEST(Autograd, BroadcastGradientShapes) {
  std::mt19937_64 gen(1);
  ag::Tape tape;
  const auto a = tape.leaf(random_tensor({3, 1}, gen));
  const auto b = tape.leaf(random_tensor({1, 4}, gen));
  const auto g = tape.backward(ag::sum_all(a * b));
  EXPECT_EQ(g.of(a).shape(), (Shape{3, 1}));
  EXPECT_EQ(g.of(b).shape(), (Shape{1, 4}));
  // d/da_i sum_j a_i b_j = sum_j b_j.
  const double bsum = sum_all(b.value());
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(g.of(a)[i], bsum, 1e-12);
}

TEST(Autograd, ZeroSeedGivesZeroGradients) {
  std::mt19937_64 gen(2);
  ag::Tape tape;
  const auto x = tape.leaf(random_tensor({5}, gen));
  const auto y = ag::tanh(ag::sin(x) * x);
  const auto g = tape.backward(y, Tensor::zeros({5}));
  const Tensor gx = g.of(x);
  for (double v : gx.data()) EXPECT_EQ(v, 0.0);
}

TEST(Autograd, UnreachedLeafHasZeroGradient) {
  ag::Tape tape;
  const auto x = tape.leaf(Tensor::scalar(1.0));
  const auto unused = tape.leaf(Tensor({2, 2}, 1.0));
  const auto g = tape.backward(ag::square(x));
  EXPECT_FALSE(g.reached(unused));
  EXPECT_EQ(g.of(unused), Tensor::zeros({2, 2}));
}

TEST(Autograd, CustomBackwardMatchesComposition) {
  const ag::CustomBackward custom_tanh{
      "tanh_custom",
      [](std::span<const Tensor> in) { return map(in[0], [](double v) { return std::tanh(v); }); },
      [](const Tensor& up, std::span<const Tensor>, const Tensor& out) {
        return std::vector<Tensor>{mul(up, map(out, [](double t) { return 1.0 - t * t; }))};
      }};
  std::mt19937_64 gen(3);
  const Tensor x0 = random_tensor({6}, gen);
  ag::Tape t1, t2;
  const auto x1 = t1.leaf(x0);
  const auto x2 = t2.leaf(x0);
  const std::vector<ag::Variable> in{x1};
  const auto g1 = t1.backward(ag::sum_all(ag::apply(custom_tanh, in)));
  const auto g2 = t2.backward(ag::sum_all(ag::tanh(x2)));
  EXPECT_LT(max_abs_diff(g1.of(x1), g2.of(x2)), 1e-12);
}

TEST(Autograd, GradcheckSquares) {
  std::mt19937_64 gen(4);
  const auto report = ag::gradcheck(
      [](ag::Tape&, std::span<const ag::Variable> in) { return ag::sum_all(ag::square(in[0])); },
      {random_tensor({5}, gen)});
  EXPECT_TRUE(report.passed);
  EXPECT_LT(report.max_rel_error, 1e-6);
}

TEST(Autograd, GradcheckSineOfProduct) {
  std::mt19937_64 gen(5);
  const auto report = ag::gradcheck(
      [](ag::Tape&, std::span<const ag::Variable> in) {
        return ag::sum_all(ag::sin(in[0] * in[1]));
      },
      {random_tensor({3, 3}, gen), random_tensor({3, 3}, gen)});
  EXPECT_TRUE(report.passed);
  EXPECT_LT(report.max_rel_error, 1e-5);
}

TEST(Autograd, GradcheckDetectsWrongGradient) {
  const ag::CustomBackward wrong{
      "bad_square",
      [](std::span<const Tensor> in) { return mul(in[0], in[0]); },
      [](const Tensor& up, std::span<const Tensor> in, const Tensor&) {
        return std::vector<Tensor>{mul(up, in[0])};  // missing factor 2
      }};
  std::mt19937_64 gen(6);
  const auto report = ag::gradcheck(
      [&](ag::Tape&, std::span<const ag::Variable> in) {
        return ag::sum_all(ag::apply(wrong, in));
      },
      {random_tensor({4}, gen, 0.5, 1.0)});
  EXPECT_FALSE(report.passed);
  EXPECT_GT(report.max_rel_error, 0.1);
}

TEST(Autograd, TieAtMaxIsReported) {
  const auto report = ag::gradcheck(
      [](ag::Tape&, std::span<const ag::Variable> in) { return ag::sum_all(ag::max(in[0], 0)); },
      {Tensor::from({3}, {1.0, 1.0, 0.0})});
  EXPECT_GE(report.ties, 1u);
  EXPECT_TRUE(report.passed);
}

TEST(Autograd, SelectionGradientsRouteToWinner) {
  ag::Tape tape;
  const auto x = tape.leaf(Tensor::from({2, 3}, {1, 5, 3, 9, 2, 4}));
  const auto g1 = tape.backward(ag::sum_all(ag::max(x, 1)));
  EXPECT_EQ(g1.of(x), Tensor::from({2, 3}, {0, 1, 0, 1, 0, 0}));
  ag::Tape tape2;
  const auto y = tape2.leaf(Tensor::from({2, 3}, {1, 5, 3, 9, 2, 4}));
  const auto g2 = tape2.backward(ag::sum_all(ag::median(y, 1)));
  EXPECT_EQ(g2.of(y), Tensor::from({2, 3}, {0, 0, 1, 0, 0, 1}));
}

class PrimitiveGradcheck : public ::testing::TestWithParam<int> {};

TEST_P(PrimitiveGradcheck, MatchesFiniteDifferences) {
  std::mt19937_64 gen(100 + static_cast<unsigned>(GetParam()));
  const Tensor a = random_tensor({2, 3}, gen, -0.5, 0.5);
  const Tensor b = random_tensor({1, 3}, gen, 0.5, 1.0);
  auto unary = [&](auto fn) {
    return ag::gradcheck(
        [fn](ag::Tape&, std::span<const ag::Variable> in) { return ag::sum_all(fn(in[0])); },
        {a});
  };
  auto binary = [&](auto fn) {
    return ag::gradcheck(
        [fn](ag::Tape&, std::span<const ag::Variable> in) {
          return ag::sum_all(fn(in[0], in[1]));
        },
        {a, b});
  };
  using V = const ag::Variable&;
  std::vector<ag::GradcheckReport> reports{
      binary([](V x, V y) { return x + y; }),
      binary([](V x, V y) { return x - y; }),
      binary([](V x, V y) { return x * y; }),
      binary([](V x, V y) { return x / y; }),
      unary([](V x) { return ag::neg(x); }),
      unary([](V x) { return ag::scale(x, 2.5); }),
      unary([](V x) { return ag::add_scalar(x, 0.3); }),
      unary([](V x) { return ag::pow(x, 3); }),
      unary([](V x) { return ag::square(x); }),
      unary([](V x) { return ag::sin(x); }),
      unary([](V x) { return ag::cos(x); }),
      unary([](V x) { return ag::exp(x); }),
      unary([](V x) { return ag::sinh(x); }),
      unary([](V x) { return ag::tanh(x); }),
      unary([](V x) { return ag::clamp(x, -0.2, 0.2); }),
      unary([](V x) { return ag::square(ag::sum(x, 1)); }),
      unary([](V x) { return ag::square(ag::max(x, 1)); }),
      unary([](V x) { return ag::square(ag::median(x, 0)); }),
      unary([](V x) { return ag::square(ag::reshape(x, {3, 2})); }),
      unary([](V x) { return ag::mean_all(ag::square(x)); }),
  };
  for (std::size_t i = 0; i < reports.size(); ++i) {
    EXPECT_TRUE(reports[i].passed) << "primitive " << i << " err " << reports[i].max_rel_error;
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, PrimitiveGradcheck, ::testing::Range(0, 5));

TEST(Autograd, StackGradient) {
  std::mt19937_64 gen(7);
  const auto report = ag::gradcheck(
      [](ag::Tape&, std::span<const ag::Variable> in) {
        const std::vector<ag::Variable> parts{in[0], ag::sin(in[1])};
        return ag::sum_all(ag::square(ag::stack(parts)));
      },
      {random_tensor({2, 2}, gen), random_tensor({2, 2}, gen)});
  EXPECT_TRUE(report.passed);
}
