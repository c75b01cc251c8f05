#include <gtest/gtest.h>

#include <cmath>

#include "ttllab/metrics.hpp"
#include "ttllab/rng.hpp"

using namespace ttllab;

TEST(TruncatedRmse, DropsTopPercent) {
  std::vector<double> e(99, 1.0);
  e.push_back(1000.0);
  EXPECT_DOUBLE_EQ(truncated_rmse(e), 1.0);
}

TEST(TruncatedRmse, AllZeros) {
  const std::vector<double> e(50, 0.0);
  EXPECT_EQ(truncated_rmse(e), 0.0);
}

TEST(TruncatedRmse, SignIgnored) {
  const std::vector<double> e{-3, 3, -3, 3};
  EXPECT_DOUBLE_EQ(truncated_rmse(e, 1.0), 3.0);
}

TEST(TruncatedRmse, MatchesTwoPassComputation) {
  Rng rng(6);
  std::vector<double> e(1000);
  for (double& v : e) v = rng.normal(0, 50);
  std::vector<double> mags;
  for (double v : e) mags.push_back(std::abs(v));
  std::sort(mags.begin(), mags.end());
  const double cut = mags[989];
  double sum = 0;
  std::size_t n = 0;
  for (double m : mags)
    if (m <= cut) {
      sum += m * m;
      ++n;
    }
  EXPECT_NEAR(truncated_rmse(e), std::sqrt(sum / n), 1e-12);
}

TEST(TruncatedRmse, EmptyRejected) { EXPECT_THROW(truncated_rmse({}), std::invalid_argument); }

TEST(Cdf, ThreeValues) {
  const auto c = empirical_cdf({3, 1, 2});
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c[0].value, 1.0);
  EXPECT_NEAR(c[0].fraction, 1.0 / 3, 1e-15);
  EXPECT_NEAR(c[1].fraction, 2.0 / 3, 1e-15);
  EXPECT_EQ(c[2].fraction, 1.0);
}

TEST(Cdf, SingleValueAndTies) {
  const auto one = empirical_cdf({5});
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].fraction, 1.0);
  const auto ties = empirical_cdf({2, 2, 7});
  ASSERT_EQ(ties.size(), 2u);
  EXPECT_NEAR(ties[0].fraction, 2.0 / 3, 1e-15);
  EXPECT_TRUE(empirical_cdf({}).empty());
}

TEST(MeanStdTest, SampleStandardDeviation) {
  const std::vector<double> xs{2, 4, 4, 4, 5, 5, 7, 9};
  const MeanStd m = mean_std(xs);
  EXPECT_DOUBLE_EQ(m.mean, 5.0);
  EXPECT_NEAR(m.stddev, std::sqrt(32.0 / 7.0), 1e-12);
  const std::vector<double> one{3};
  EXPECT_EQ(mean_std(one).stddev, 0.0);
}
