#include <cmath>
#include <limits>
#include <algorithm>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "onnkit/archive.hpp"
#include "onnkit/optim.hpp"
#include "onnkit/rng.hpp"
#include "support.hpp"

using namespace onnkit;
using testing_support::random_tensor;
using testing_support::throws_code;

namespace {

void step_once(Optimizer& opt, Tensor& p, const Tensor& g) {
  Tensor* params[] = {&p};
  const Tensor grads[] = {g};
  opt.step(params, grads);
}

}  // namespace

TEST(Optim, PlainSgd) {
  Optimizer opt(OptimizerConfig{"sgd", 1.0, 0.0});
  Tensor p = Tensor::scalar(0.0);
  step_once(opt, p, Tensor::scalar(2.0));
  EXPECT_EQ(p.item(), -2.0);
}

TEST(Optim, SgdIsExactlyPMinusLrG) {
  std::mt19937_64 gen(1);
  Optimizer opt(OptimizerConfig{"sgd", 0.37, 0.0});
  Tensor p = random_tensor({4, 3}, gen);
  const Tensor g = random_tensor({4, 3}, gen);
  const Tensor expected = sub(p, scale(g, 0.37));
  step_once(opt, p, g);
  EXPECT_EQ(p, expected);
}

TEST(Optim, SgdMomentumRecurrence) {
  Optimizer opt(OptimizerConfig{"sgd", 0.1, 0.9});
  Tensor p = Tensor::scalar(0.0);
  step_once(opt, p, Tensor::scalar(1.0));
  EXPECT_NEAR(p.item(), -0.1, 1e-15);
  EXPECT_NEAR(opt.state().first[0].item(), 1.0, 1e-15);
  step_once(opt, p, Tensor::scalar(1.0));
  EXPECT_NEAR(opt.state().first[0].item(), 1.9, 1e-15);
  EXPECT_NEAR(p.item(), -0.29, 1e-15);
}

TEST(Optim, AdamFirstStep) {
  Optimizer opt(OptimizerConfig{"adam", 0.001});
  Tensor p = Tensor::scalar(0.0);
  step_once(opt, p, Tensor::scalar(1.0));
  EXPECT_NEAR(p.item(), -0.001 / (1.0 + 1e-8), 1e-15);
}

TEST(Optim, AdamFirstStepSignAndScale) {
  std::mt19937_64 gen(2);
  Optimizer opt(OptimizerConfig{"adam", 0.01});
  Tensor p = Tensor::zeros({50});
  Tensor g = random_tensor({50}, gen, -5, 5);
  g[0] = 1e-3;
  step_once(opt, p, g);
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_EQ(std::signbit(p[i]), !std::signbit(g[i]));
    EXPECT_NEAR(std::abs(p[i]), 0.01, 1e-6);
  }
}

TEST(Optim, ZeroGradientAndZeroLrLeaveParameters) {
  std::mt19937_64 gen(3);
  for (const char* name : {"sgd", "adam"}) {
    Optimizer zero_g(OptimizerConfig{name, 0.5, 0.9});
    Tensor p = random_tensor({6}, gen);
    const Tensor p0 = p;
    step_once(zero_g, p, Tensor::zeros({6}));
    EXPECT_EQ(p, p0);
    Optimizer zero_lr(OptimizerConfig{name, 0.0, 0.9});
    step_once(zero_lr, p, random_tensor({6}, gen));
    EXPECT_EQ(p, p0);
  }
}

TEST(Optim, UnknownOptimizer) {
  try {
    Optimizer opt(OptimizerConfig{"cgd"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownOptimizer);
    EXPECT_NE(std::string(e.what()).find("sgd"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("adam"), std::string::npos);
  }
}

TEST(Optim, NonFiniteGradientLeavesStateUntouched) {
  Optimizer opt(OptimizerConfig{"adam", 0.1});
  Tensor a = Tensor::scalar(1.0), b = Tensor::scalar(2.0);
  Tensor* params[] = {&a, &b};
  const Tensor good[] = {Tensor::scalar(0.5), Tensor::scalar(0.5)};
  opt.step(params, good);
  const OptimizerState before = opt.state();
  const Tensor a0 = a, b0 = b;
  const Tensor bad[] = {Tensor::scalar(0.5), Tensor::scalar(std::numeric_limits<double>::quiet_NaN())};
  EXPECT_TRUE(throws_code([&] { opt.step(params, bad); }, ErrorCode::NonFiniteGradient));
  EXPECT_EQ(a, a0);
  EXPECT_EQ(b, b0);
  EXPECT_EQ(opt.state(), before);
}

TEST(Optim, LrDecay) {
  Optimizer opt(OptimizerConfig{"sgd", 1.0, 0.0, 0.9, 0.999, 1e-8, 0.5});
  opt.decay_lr();
  opt.decay_lr();
  EXPECT_EQ(opt.state().lr, 0.25);
}

TEST(Optim, SerializationRoundTrip) {
  std::mt19937_64 gen(4);
  for (const char* name : {"sgd", "adam"}) {
    Optimizer opt(OptimizerConfig{name, 0.05, 0.8});
    EXPECT_EQ(deserialize_state(serialize_state(opt.state())), opt.state());
    Tensor p = random_tensor({3, 2}, gen);
    for (int i = 0; i < 3; ++i) step_once(opt, p, random_tensor({3, 2}, gen));
    EXPECT_EQ(deserialize_state(serialize_state(opt.state())), opt.state());
  }
}

TEST(Optim, ResumedTrajectoryIsBitwiseEqual) {
  std::mt19937_64 gen(5);
  const Tensor target = random_tensor({5}, gen);
  const Tensor start = random_tensor({5}, gen);
  auto grad = [&](const Tensor& p) { return scale(sub(p, target), 2.0); };
  auto loss = [&](const Tensor& p) {
    const Tensor d = sub(p, target);
    return dot(d, d);
  };
  std::vector<double> straight, resumed;
  Optimizer a(OptimizerConfig{"adam", 0.05});
  Tensor pa = start;
  for (int i = 0; i < 10; ++i) {
    step_once(a, pa, grad(pa));
    straight.push_back(loss(pa));
  }
  Optimizer b(OptimizerConfig{"adam", 0.05});
  Tensor pb = start;
  for (int i = 0; i < 5; ++i) {
    step_once(b, pb, grad(pb));
    resumed.push_back(loss(pb));
  }
  Optimizer c(deserialize_state(serialize_state(b.state())));
  for (int i = 0; i < 5; ++i) {
    step_once(c, pb, grad(pb));
    resumed.push_back(loss(pb));
  }
  EXPECT_EQ(straight, resumed);
  EXPECT_EQ(pa, pb);
}

TEST(Optim, CorruptAndVersionedBytes) {
  Optimizer opt(OptimizerConfig{"adam", 0.01});
  Tensor p = Tensor::ones({4});
  step_once(opt, p, Tensor::ones({4}));
  const std::string bytes = serialize_state(opt.state());
  EXPECT_TRUE(throws_code([&] { deserialize_state(bytes.substr(0, bytes.size() - 3)); },
                          ErrorCode::CorruptState));
  EXPECT_TRUE(throws_code([&] { deserialize_state(bytes.substr(0, 5)); }, ErrorCode::CorruptState));
  std::string versioned = bytes;
  versioned[8] = 2;
  EXPECT_TRUE(throws_code([&] { deserialize_state(versioned); }, ErrorCode::VersionMismatch));
}

TEST(Archive, RoundTripAndErrors) {
  Archive a;
  a.put("t", Tensor::from({2, 2}, {1, -2, 3.5, 1e-300}));
  a.put_u64("u", {1, 2, 18446744073709551615ull});
  a.put_bytes("b", std::string("x\0y", 3));
  const std::string bytes = a.serialize();
  EXPECT_EQ(bytes.substr(0, 8), "FONNCKPT");
  const Archive b = Archive::deserialize(bytes);
  EXPECT_EQ(b.tensor("t"), a.tensor("t"));
  EXPECT_EQ(b.u64("u"), a.u64("u"));
  EXPECT_EQ(b.bytes("b"), std::string("x\0y", 3));
  EXPECT_EQ(b.names(), a.names());
  a.put("t", Tensor::scalar(1));
  EXPECT_EQ(a.tensor("t"), Tensor::scalar(1));
  EXPECT_EQ(a.size(), 3u);
  EXPECT_TRUE(throws_code([&] { Archive::deserialize(bytes + "z"); }, ErrorCode::CorruptState));
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_TRUE(throws_code([&] { Archive::deserialize(bad); }, ErrorCode::CorruptState));
  EXPECT_TRUE(throws_code([&] { (void)b.tensor("missing"); }, ErrorCode::CorruptState));
  EXPECT_TRUE(throws_code([&] { (void)b.tensor("u"); }, ErrorCode::CorruptState));
}

TEST(Archive, DuplicateEntriesRejected) {
  Archive a;
  a.put("xa", Tensor::scalar(1));
  a.put("xb", Tensor::scalar(2));
  std::string bytes = a.serialize();
  const auto pos = bytes.find("xb");
  ASSERT_NE(pos, std::string::npos);
  bytes[pos + 1] = 'a';
  EXPECT_TRUE(throws_code([&] { Archive::deserialize(bytes); }, ErrorCode::CorruptState));
}

TEST(Rng, DeterministicAndRestorable) {
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.next(), b.next());
  const std::string state = a.save_state();
  const std::uint64_t x = a.next();
  const double u = a.uniform();
  Rng c;
  c.load_state(state);
  EXPECT_EQ(c.next(), x);
  EXPECT_EQ(c.uniform(), u);
  for (int i = 0; i < 1000; ++i) {
    const double v = a.uniform(-0.1, 0.1);
    EXPECT_GE(v, -0.1);
    EXPECT_LT(v, 0.1);
    EXPECT_LT(a.below(7), 7u);
  }
  EXPECT_NE(mix_seed(1, 2), mix_seed(2, 1));
  EXPECT_EQ(mix_seed(1, 2), mix_seed(1, 2));
}

TEST(Rng, ShuffleIsPermutation) {
  Rng r(3);
  std::vector<int> v(20);
  std::iota(v.begin(), v.end(), 0);
  r.shuffle(v);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 20; ++i) EXPECT_EQ(sorted[static_cast<std::size_t>(i)], i);
}
