#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "ttllab/neural.hpp"

using namespace ttllab;

namespace {

double loss_of(const MlpParams& p, const std::vector<double>& x, const std::vector<double>& w) {
  const Activations a = forward(p, x);
  double l = 0;
  for (std::size_t i = 0; i < w.size(); ++i) l += w[i] * a.output()[i];
  return l;
}

}  // namespace

TEST(Mlp, ZeroWeightsGiveZeroOutput) {
  MlpParams p({11, 30, 30, 3});
  const std::vector<double> x(11, 0.7);
  const Activations acts = forward(p, x);
  for (double v : acts.output()) EXPECT_EQ(v, 0.0);
}

TEST(Mlp, ForwardMatchesHandComputation) {
  MlpParams p({2, 2, 1});
  p.weight(0, 0, 0) = 1;
  p.weight(0, 0, 1) = -1;
  p.weight(0, 1, 0) = 0.5;
  p.weight(0, 1, 1) = 0.5;
  p.bias(0, 1) = -10;  // second hidden unit dead
  p.weight(1, 0, 0) = 2;
  p.weight(1, 0, 1) = 3;
  p.bias(1, 0) = 0.25;
  const std::vector<double> x{3, 1};
  EXPECT_DOUBLE_EQ(forward(p, x).output()[0], 2 * 2 + 0.25);
}

TEST(Mlp, InputMismatchRejected) {
  MlpParams p({3, 2});
  const std::vector<double> x(2, 0.0);
  EXPECT_THROW(forward(p, x), std::invalid_argument);
}

TEST(Mlp, BackwardMatchesFiniteDifferences) {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    MlpParams p = init_mlp({11, 30, 30, 3}, rng);
    for (double& v : p.data) v += rng.uniform(-0.05, 0.05);  // nonzero biases
    std::vector<double> x(11), w(3);
    for (double& v : x) v = rng.uniform(-1, 1);
    for (double& v : w) v = rng.uniform(-1, 1);
    const MlpParams g = backward(p, forward(p, x), w);
    const double h = 1e-5;
    for (std::size_t i = 0; i < p.size(); i += 7) {
      MlpParams plus = p, minus = p;
      plus.data[i] += h;
      minus.data[i] -= h;
      const double fd = (loss_of(plus, x, w) - loss_of(minus, x, w)) / (2 * h);
      EXPECT_NEAR(g.data[i], fd, 1e-4 * std::max(1.0, std::abs(fd))) << "param " << i;
    }
  }
}

TEST(Mlp, LinearNetworkGradient) {
  MlpParams p({1, 1});
  p.weight(0, 0, 0) = 1;
  const std::vector<double> x{2};
  const double y = forward(p, x).output()[0];
  const std::vector<double> og{2 * (y - 3)};  // d/dy (y-3)^2
  MlpParams g = backward(p, forward(p, x), og);
  EXPECT_DOUBLE_EQ(g.weight(0, 0, 0), -4.0);
  EXPECT_DOUBLE_EQ(g.bias(0, 0), -2.0);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  MlpParams p({1, 1});
  p.data = {0.5, -0.5};
  MlpParams g = p.zeros_like();
  g.data = {3.0, -0.01};
  AdamState st;
  adam_step(p, g, st, 0.001, 1e9);
  EXPECT_NEAR(p.data[0], 0.5 - 0.001, 1e-9);
  EXPECT_NEAR(p.data[1], -0.5 + 0.001, 1e-7);
}

TEST(Adam, ElementClipAppliedBeforeMoments) {
  MlpParams p({1, 1});
  MlpParams g = p.zeros_like();
  g.data = {100.0, 0.0};
  AdamState st;
  adam_step(p, g, st, 0.001, 30);
  EXPECT_DOUBLE_EQ(st.m[0], 0.1 * 30);
}

TEST(Adam, GlobalNormClipScalesVector) {
  MlpParams p({1, 1});
  MlpParams g = p.zeros_like();
  g.data = {30.0, 40.0};
  AdamState st;
  adam_step(p, g, st, 0.001, 5, ClipMode::GlobalNorm);
  EXPECT_NEAR(st.m[0], 0.1 * 3, 1e-12);
  EXPECT_NEAR(st.m[1], 0.1 * 4, 1e-12);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  MlpParams p({2, 2});
  p.data.assign(p.size(), 0.3);
  const MlpParams before = p;
  AdamState st;
  adam_step(p, p.zeros_like(), st, 0.01, 30);
  EXPECT_EQ(p.data, before.data);
}

TEST(Adam, NoMomentumReducesToSignedStep) {
  MlpParams p({1, 1});
  p.data = {1.0, 1.0};
  MlpParams g = p.zeros_like();
  g.data = {0.5, -2.0};
  AdamState st;
  st.beta1 = 0;
  st.beta2 = 0;
  st.eps = 0;
  adam_step(p, g, st, 0.1, 1e9);
  EXPECT_DOUBLE_EQ(p.data[0], 0.9);
  EXPECT_DOUBLE_EQ(p.data[1], 1.1);
}

TEST(Adam, ShapeMismatchRejected) {
  MlpParams p({1, 1});
  MlpParams g({2, 1});
  AdamState st;
  EXPECT_THROW(adam_step(p, g, st, 0.1, 1), std::invalid_argument);
}

TEST(Snapshot, RoundTripIsBitExact) {
  Rng rng(5);
  const MlpParams p = init_mlp({11, 30, 30, 3}, rng);
  std::stringstream ss;
  write_snapshot(ss, p);
  const MlpParams q = read_snapshot(ss);
  EXPECT_EQ(p.dims, q.dims);
  EXPECT_EQ(p.data, q.data);
  const std::vector<double> x(11, 0.1);
  EXPECT_EQ(forward(p, x).output()[0], forward(q, x).output()[0]);
}

TEST(Snapshot, TruncatedInputRejected) {
  MlpParams p({2, 2});
  std::stringstream ss;
  write_snapshot(ss, p);
  std::string bytes = ss.str();
  bytes.pop_back();
  std::stringstream cut(bytes);
  EXPECT_THROW(read_snapshot(cut), std::runtime_error);
}
