#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "onnkit/network.hpp"
#include "support.hpp"

using namespace onnkit;
using testing_support::correlate_at;
using testing_support::random_tensor;
using testing_support::throws_code;

namespace {

std::shared_ptr<const OperatorSetLibrary> builtin() {
  return std::make_shared<const OperatorSetLibrary>(OperatorSetLibrary::builtin());
}

void randomize(OpNetwork& net, std::mt19937_64& gen, double bound = 0.5) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Tensor* p : net.parameters()) {
    for (double& v : p->data()) v = dist(gen);
  }
}

// Reference CNN: each tier computes tanh(sum_c corr(x_c, w_kc) - b_k), then
// resamples with explicit loops.
Tensor reference_cnn(const OpNetwork& net, Tensor x) {
  for (const OpTier& tier : net.tiers()) {
    const std::size_t M = x.extent(1), N = x.extent(2);
    Tensor y({tier.blocks.size(), M, N});
    for (std::size_t k = 0; k < tier.blocks.size(); ++k) {
      const OpBlock& b = tier.blocks[k];
      for (std::size_t i = 0; i < M; ++i) {
        for (std::size_t j = 0; j < N; ++j) {
          double acc = 0.0;
          for (std::size_t c = 0; c < tier.in_channels; ++c) acc += correlate_at(x, b.weights, c, i, j);
          y.at({k, i, j}) = std::tanh(acc - b.bias.item());
        }
      }
    }
    const int s = tier.sampling;
    if (s == 1) {
      x = y;
    } else if (s > 1) {
      const auto f = static_cast<std::size_t>(s);
      x = Tensor({y.extent(0), M / f, N / f});
      for (std::size_t k = 0; k < y.extent(0); ++k) {
        for (std::size_t i = 0; i < M / f; ++i) {
          for (std::size_t j = 0; j < N / f; ++j) {
            double best = -1e300;
            for (std::size_t u = 0; u < f; ++u) {
              for (std::size_t v = 0; v < f; ++v) best = std::max(best, y.at({k, f * i + u, f * j + v}));
            }
            x.at({k, i, j}) = best;
          }
        }
      }
    } else {
      const auto f = static_cast<std::size_t>(-s);
      x = Tensor({y.extent(0), M * f, N * f});
      for (std::size_t k = 0; k < y.extent(0); ++k) {
        for (std::size_t i = 0; i < M * f; ++i) {
          for (std::size_t j = 0; j < N * f; ++j) x.at({k, i, j}) = y.at({k, i / f, j / f});
        }
      }
    }
  }
  return x;
}

}  // namespace

TEST(Network, MulSumIdentityIsConvolution) {
  const auto lib = builtin();
  const std::size_t set = lib->index_of("mul", "sum", "identity");
  std::mt19937_64 gen(1);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t k = 2 * (trial % 3) + 1;
    const std::size_t M = 4 + trial % 3, N = 5;
    OpNetwork net({1, {{1, k, 1, {set}}}}, lib);
    randomize(net, gen);
    const Tensor x = random_tensor({1, M, N}, gen);
    const Tensor y = net.predict_one(x);
    const OpBlock& b = net.tiers()[0].blocks[0];
    // True convolution: w[u,v] pairs with x[i - u + p, j - v + p].
    const long p = static_cast<long>(k / 2);
    for (std::size_t i = 0; i < M; ++i) {
      for (std::size_t j = 0; j < N; ++j) {
        double conv = 0.0;
        for (std::size_t u = 0; u < k; ++u) {
          for (std::size_t v = 0; v < k; ++v) {
            const long r = static_cast<long>(i) - static_cast<long>(u) + p;
            const long q = static_cast<long>(j) - static_cast<long>(v) + p;
            if (r < 0 || q < 0 || r >= static_cast<long>(M) || q >= static_cast<long>(N)) continue;
            conv += b.weights.at({0, k - 1 - u, k - 1 - v}) *
                    x.at({0, static_cast<std::size_t>(r), static_cast<std::size_t>(q)});
          }
        }
        EXPECT_NEAR(y.at({0, i, j}), conv - b.bias.item(), 1e-10);
      }
    }
  }
}

TEST(Network, TanhNetworkMatchesReferenceCnn) {
  const auto lib = builtin();
  const std::size_t set = lib->index_of("mul", "sum", "tanh");
  std::mt19937_64 gen(2);
  OpNetwork net({2, {{3, 3, 2, {set}}, {4, 5, -2, {set}}, {1, 3, 1, {set}}}}, lib);
  randomize(net, gen);
  const Tensor x = random_tensor({2, 8, 6}, gen);
  EXPECT_LT(max_abs_diff(net.predict_one(x), reference_cnn(net, x)), 1e-9);
}

TEST(Network, ZeroWeightsGiveZeroOutput) {
  const auto lib = builtin();
  OpNetwork net({1, {{1, 3, 1, {lib->index_of("sine", "sum", "tanh")}}}}, lib);
  std::mt19937_64 gen(3);
  const Tensor y = net.predict_one(random_tensor({1, 5, 5}, gen));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Network, ChannelsAreSummedBeforeActivation) {
  const auto lib = builtin();
  const std::size_t set = lib->index_of("sine", "median", "tanh");
  std::mt19937_64 gen(4);
  OpNetwork two({2, {{1, 3, 1, {set}}}}, lib);
  randomize(two, gen);
  const Tensor x = random_tensor({2, 4, 4}, gen);
  const OpBlock& b = two.tiers()[0].blocks[0];
  Tensor pre({4, 4});
  for (std::size_t c = 0; c < 2; ++c) {
    OpNetwork one({1, {{1, 3, 1, {lib->index_of("sine", "median", "identity")}}}}, lib);
    Tensor w({1, 3, 3});
    for (std::size_t q = 0; q < 9; ++q) w[q] = b.weights[c * 9 + q];
    *one.parameters()[0] = w;
    Tensor xc({1, 4, 4});
    for (std::size_t q = 0; q < 16; ++q) xc[q] = x[c * 16 + q];
    const Tensor yc = one.predict_one(xc);
    for (std::size_t q = 0; q < 16; ++q) pre[q] += yc[q];
  }
  const Tensor y = two.predict_one(x);
  for (std::size_t q = 0; q < 16; ++q) EXPECT_NEAR(y[q], std::tanh(pre[q] - b.bias.item()), 1e-12);
}

TEST(Network, IdenticalBlocksGiveIdenticalChannels) {
  const auto lib = builtin();
  OpNetwork net({1, {{2, 3, 1, {lib->index_of("chirp", "max", "tanh")}}}}, lib);
  std::mt19937_64 gen(5);
  randomize(net, gen);
  auto params = net.parameters();
  *params[2] = *params[0];
  *params[3] = *params[1];
  const Tensor y = net.predict_one(random_tensor({1, 4, 4}, gen));
  for (std::size_t q = 0; q < 16; ++q) EXPECT_EQ(y[q], y[16 + q]);
}

TEST(Network, SingleBlockTierEqualsBlockForward) {
  const auto lib = builtin();
  OpNetwork net({1, {{1, 3, 1, {7}}}}, lib);
  std::mt19937_64 gen(6);
  randomize(net, gen);
  const Tensor x = random_tensor({1, 5, 5}, gen);
  const OpBlock& b = net.tiers()[0].blocks[0];
  const UnfoldPlan plan(5, 5, 3, 3);
  const Tensor direct =
      block_forward(*lib, 7, ag::Variable::detached(b.weights), ag::Variable::detached(b.bias),
                    ag::Variable::detached(unfold(x, plan)), 5, 5)
          .value();
  EXPECT_EQ(net.predict_one(x), reshape(direct, {1, 5, 5}));
}

TEST(Network, DownsampleShapes) {
  const auto lib = builtin();
  OpNetwork net({1, {{3, 3, 2, {0}}}}, lib);
  EXPECT_EQ(net.predict_one(Tensor({1, 4, 4})).shape(), (Shape{3, 2, 2}));
  EXPECT_TRUE(throws_code([&] { net.output_shapes(5, 4); }, ErrorCode::IndivisibleExtent));
}

TEST(Network, IdentityNetwork) {
  const auto lib = builtin();
  OpNetwork net({1, {{1, 1, 1, {lib->index_of("mul", "sum", "identity")}}}}, lib);
  *net.parameters()[0] = Tensor::ones({1, 1, 1});
  std::mt19937_64 gen(7);
  const Tensor x = random_tensor({1, 6, 5}, gen);
  EXPECT_EQ(net.predict_one(x), x);
}

TEST(Network, ThreeTierArchitecture) {
  const auto lib = builtin();
  OpNetwork net({1, {{12, 21, 2, {1}}, {32, 7, -2, {6}}, {1, 3, 1, {3}}}}, lib);
  EXPECT_EQ(net.parameter_count(),
            12u * (21 * 21 + 1) + 32u * (12 * 7 * 7 + 1) + 1u * (32 * 3 * 3 + 1));
  EXPECT_EQ(net.parameter_count(), 24441u);
  const auto shapes = net.output_shapes(32, 32);
  ASSERT_EQ(shapes.size(), 3u);
  EXPECT_EQ(shapes[0], (Shape{12, 16, 16}));
  EXPECT_EQ(shapes[1], (Shape{32, 32, 32}));
  EXPECT_EQ(shapes[2], (Shape{1, 32, 32}));
}

TEST(Network, ChannelChaining) {
  const auto lib = builtin();
  OpNetwork net({3, {{5, 3, 1, {0}}, {2, 5, 1, {0}}, {4, 1, 1, {0}}}}, lib);
  std::size_t expected_in = 3;
  for (const OpTier& tier : net.tiers()) {
    EXPECT_EQ(tier.in_channels, expected_in);
    for (const OpBlock& b : tier.blocks) EXPECT_EQ(b.weights.extent(0), expected_in);
    expected_in = tier.blocks.size();
  }
  EXPECT_EQ(net.spec().tiers.size(), 3u);
}

TEST(Network, InvalidSpecs) {
  const auto lib = builtin();
  EXPECT_TRUE(throws_code([&] { OpNetwork({1, {{1, 4, 1, {0}}}}, lib); }, ErrorCode::ValidationError));
  EXPECT_TRUE(throws_code([&] { OpNetwork({1, {{1, 3, 1, {54}}}}, lib); }, ErrorCode::UnknownOperator));
  EXPECT_TRUE(throws_code([&] { OpNetwork({1, {{2, 3, 1, {0, 1, 2}}}}, lib); }, ErrorCode::ValidationError));
}

TEST(Network, ResetIsDeterministicAndBounded) {
  const auto lib = builtin();
  const NetworkSpec spec{2, {{3, 3, 1, {0}}, {1, 5, 1, {0}}}};
  OpNetwork a(spec, lib), b(spec, lib), c(spec, lib);
  a.reset_parameters(11);
  b.reset_parameters(11);
  c.reset_parameters(12);
  bool differs = false;
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(*pa[i], *pb[i]);
    differs = differs || !(*pa[i] == *pc[i]);
  }
  EXPECT_TRUE(differs);
  for (const OpTier& tier : a.tiers()) {
    for (const OpBlock& blk : tier.blocks) {
      for (double v : blk.weights.data()) {
        EXPECT_GE(v, -0.1);
        EXPECT_LE(v, 0.1);
      }
      EXPECT_EQ(blk.bias.item(), 0.0);
    }
  }
}

TEST(Network, FanInInitBound) {
  const auto lib = builtin();
  OpNetwork net({4, {{2, 5, 1, {0}}}}, lib);
  net.reset_parameters(3, {InitKind::FanInUniform, 0.0});
  const double k = 1.0 / std::sqrt(4.0 * 25.0);
  for (double v : net.tiers()[0].blocks[0].weights.data()) EXPECT_LE(std::abs(v), k);
}

TEST(Network, BatchConsistency) {
  const auto lib = builtin();
  OpNetwork net({1, {{3, 3, 2, {lib->index_of("exp", "median", "tanh")}}, {1, 3, -2, {9}}}}, lib);
  std::mt19937_64 gen(8);
  randomize(net, gen, 0.3);
  const Tensor batch = random_tensor({4, 1, 6, 6}, gen);
  const Tensor out = net.predict(batch);
  for (std::size_t b = 0; b < 4; ++b) EXPECT_EQ(take_leading(out, b), net.predict_one(take_leading(batch, b)));
}

TEST(Network, TrackedForwardMatchesPredict) {
  const auto lib = builtin();
  OpNetwork net({1, {{2, 3, 1, {4}}, {1, 3, 1, {30}}}}, lib);
  std::mt19937_64 gen(9);
  randomize(net, gen, 0.3);
  const Tensor x = random_tensor({1, 5, 5}, gen);
  ag::Tape tape;
  const auto params = net.bind(tape);
  const auto y = net.forward(params, tape.constant(x));
  EXPECT_EQ(y.value(), net.predict_one(x));
  EXPECT_EQ(params.size(), net.parameters().size());
  EXPECT_EQ(net.parameter_names().size(), params.size());
}
