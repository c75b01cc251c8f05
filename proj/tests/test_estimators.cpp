#include <gtest/gtest.h>

#include "fake_env.hpp"

using namespace ttllab;
using ttllab::testing::FakeEnv;

TEST(Poisson, SumOfRates) {
  WriteRateTracker w(60);
  for (int i = 0; i < 6; ++i) w.record_write(1, 10 + i);  // 0.1/s
  for (int i = 0; i < 3; ++i) w.record_write(2, 10 + i);  // 0.05/s
  const std::vector<std::size_t> keys{1, 2};
  EXPECT_NEAR(poisson_ttl(keys, w, 300, 60), 1.0 / 0.15, 1e-12);
}

TEST(Poisson, UnknownKeysCountAsMaxTtlRate) {
  WriteRateTracker w(60);
  const std::vector<std::size_t> one{1};
  EXPECT_DOUBLE_EQ(poisson_ttl(one, w, 300, 60), 300.0);
  const std::vector<std::size_t> two{1, 2};
  EXPECT_DOUBLE_EQ(poisson_ttl(two, w, 300, 60), 150.0);
}

TEST(Poisson, MoreWritesShorterTtl) {
  WriteRateTracker w(60);
  const std::vector<std::size_t> keys{1, 2, 3};
  double last = poisson_ttl(keys, w, 300, 60);
  for (int i = 0; i < 30; ++i) {
    w.record_write(static_cast<std::size_t>(i % 3) + 1, 30 + i * 0.5);
    const double ttl = poisson_ttl(keys, w, 300, 60);
    EXPECT_LE(ttl, last);
    last = ttl;
  }
}

TEST(Poisson, EmptyResultRejected) {
  WriteRateTracker w(60);
  EXPECT_THROW(poisson_ttl({}, w, 300, 0), std::invalid_argument);
}

TEST(Poisson, EstimatorUsesTelemetry) {
  FakeEnv env;
  env.t = 60;
  for (int i = 0; i < 6; ++i) env.tel.writes.record_write(3, 10 + i);
  PoissonEstimator est(300);
  const std::vector<std::size_t> keys{3};
  EXPECT_NEAR(est.decide({0, keys, 0}, env), 10.0, 1e-12);
  EXPECT_EQ(est.decide({0, {}, 0}, env), 300.0);
}

TEST(Fixed, ConstantTtl) {
  FakeEnv env;
  FixedEstimator est(40);
  const std::vector<std::size_t> keys{1};
  EXPECT_EQ(est.decide({0, keys, 0}, env), 40.0);
  EXPECT_THROW(FixedEstimator(0), std::invalid_argument);
}

TEST(BestDefault, ExactMatch) {
  const std::vector<double> ttls(10, 40.0), grid{10, 40, 60};
  const BestDefault b = best_default_oracle(ttls, grid);
  EXPECT_EQ(b.ttl, 40.0);
  EXPECT_EQ(b.rmse, 0.0);
}

TEST(BestDefault, Midpoint) {
  const std::vector<double> ttls{10, 30}, grid{10, 20, 30};
  const BestDefault b = best_default_oracle(ttls, grid, 1.0);
  EXPECT_EQ(b.ttl, 20.0);
  EXPECT_DOUBLE_EQ(b.rmse, 10.0);
}

TEST(BestDefault, EmptyInputsRejected) {
  const std::vector<double> grid{1};
  EXPECT_THROW(best_default_oracle({}, grid), std::invalid_argument);
  const std::vector<double> ttls{1};
  EXPECT_THROW(best_default_oracle(ttls, {}), std::invalid_argument);
}
