#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "probts/npts.hpp"

using namespace probts;

namespace {

std::vector<Observation> values(std::initializer_list<double> v) { return {v.begin(), v.end()}; }

TimeSeriesRecord record_of(std::vector<Observation> z, const std::string& id = "a") {
  TimeSeriesRecord r;
  r.item_id = id;
  r.start = Timestamp::parse("2020-01-01 00:00:00");
  r.freq = Frequency::parse("H");
  r.target = std::move(z);
  return r;
}

NptsConfig with_alpha(double alpha, int paths = 1000) {
  NptsConfig c;
  c.alpha = alpha;
  c.num_sample_paths = paths;
  return c;
}

}  // namespace

TEST(NptsWeights, GeometricDecayTowardsThePast) {
  const auto w = npts_weights(5, 0.7);
  double total = 0;
  for (double x : w) total += x;
  EXPECT_NEAR(total, 1.0, 1e-15);
  for (int t = 0; t + 1 < 5; ++t) EXPECT_NEAR(w[t + 1] / w[t], std::exp(0.7), 1e-12);
}

TEST(NptsWeights, LimitsAndValidation) {
  for (double x : npts_weights(4, 0.0)) EXPECT_DOUBLE_EQ(x, 0.25);
  EXPECT_EQ(npts_weights(3, kInf), (std::vector<double>{0, 0, 1}));
  const auto big = npts_weights(2000, 50.0);
  EXPECT_DOUBLE_EQ(big.back(), 1.0 - big[1998]);
  EXPECT_THROW(npts_weights(0, 1.0), ConfigError);
  EXPECT_THROW(npts_weights(3, -1.0), ConfigError);
}

TEST(NptsAutoAlpha, RecentSeasonCarriesHalfTheWeight) {
  for (auto [T, m] : {std::pair{100, 24}, std::pair{500, 7}, std::pair{30, 1}}) {
    const double alpha = npts_auto_alpha(T, m);
    double recent = 0, total = 0;
    for (int d = 0; d < T; ++d) {
      const double w = std::exp(-alpha * d);
      total += w;
      if (d < m) recent += w;
    }
    EXPECT_NEAR(recent / total, 0.5, 1e-10) << T << " " << m;
  }
  EXPECT_EQ(npts_auto_alpha(10, 5), 0.0);
}

TEST(NptsSamplePaths, ZeroAlphaIsClimatological) {
  const auto z = values({1, 2, 3, 4});
  Rng rng(1);
  const int n = 40000;
  const auto paths = npts_sample_paths(z, with_alpha(0.0, n), 1, 1, rng);
  std::map<double, int> counts;
  for (int i = 0; i < n; ++i) ++counts[paths(i, 0)];
  ASSERT_EQ(counts.size(), 4u);
  for (const auto& [v, c] : counts) EXPECT_NEAR(c / double(n), 0.25, 5 * std::sqrt(0.25 * 0.75 / n)) << v;
}

TEST(NptsSamplePaths, InfiniteAlphaIsNaive) {
  const auto z = values({3, 1, 4, 1, 5});
  Rng rng(2);
  const auto paths = npts_sample_paths(z, with_alpha(kInf, 10), 1, 6, rng);
  EXPECT_TRUE((paths.array() == 5.0).all());
}

TEST(NptsSamplePaths, SeasonalNaiveRepeatsTheLastSeason) {
  auto c = with_alpha(kInf, 5);
  c.seasonal = true;
  const auto z = values({9, 9, 9, 1, 2, 3});
  Rng rng(3);
  const auto paths = npts_sample_paths(z, c, 3, 7, rng);
  const double expected[] = {1, 2, 3, 1, 2, 3, 1};
  for (int p = 0; p < 5; ++p) {
    for (int k = 0; k < 7; ++k) EXPECT_EQ(paths(p, k), expected[k]);
  }
}

TEST(NptsSamplePaths, FirstStepMeanIsKernelWeightedAverage) {
  const auto z = values({2.0, -1.0, 5.0, 0.5, 3.0, 8.0, 1.0});
  const double alpha = 0.4;
  const auto w = npts_weights(7, alpha);
  double mean = 0, second = 0;
  for (int t = 0; t < 7; ++t) {
    mean += w[t] * *z[t];
    second += w[t] * *z[t] * *z[t];
  }
  const int n = 100000;
  Rng rng(4);
  const auto paths = npts_sample_paths(z, with_alpha(alpha, n), 1, 1, rng);
  const double se = std::sqrt((second - mean * mean) / n);
  EXPECT_NEAR(paths.col(0).mean(), mean, 4 * se);
}

TEST(NptsSamplePaths, SeasonalCandidatesShareThePhase) {
  auto c = with_alpha(0.0, 2000);
  c.seasonal = true;
  const auto z = values({10, 20, 11, 21, 12, 22});
  Rng rng(5);
  const auto paths = npts_sample_paths(z, c, 2, 2, rng);
  for (int p = 0; p < paths.rows(); ++p) {
    EXPECT_TRUE(paths(p, 0) >= 10 && paths(p, 0) <= 12);
    EXPECT_TRUE(paths(p, 1) >= 20 && paths(p, 1) <= 22);
  }
}

TEST(NptsSamplePaths, MissingValuesAreNeverSampled) {
  std::vector<Observation> gappy{1.0, kMissing, 3.0, kMissing, 5.0, kMissing};
  for (double alpha : {0.0, 0.5, 30.0, kInf}) {
    Rng rng(6);
    const auto paths = npts_sample_paths(gappy, with_alpha(alpha, 500), 1, 4, rng);
    for (Eigen::Index i = 0; i < paths.size(); ++i) {
      const double v = paths.data()[i];
      EXPECT_TRUE(v == 1.0 || v == 3.0 || v == 5.0) << "alpha=" << alpha << " v=" << v;
    }
  }
}

TEST(NptsSamplePaths, EmptyCandidateSetIsError) {
  Rng rng(7);
  auto seasonal = with_alpha(0.0);
  seasonal.seasonal = true;
  EXPECT_THROW(npts_sample_paths(values({1, 2}), seasonal, 5, 1, rng), DomainError);
  const std::vector<Observation> none(4, kMissing);
  EXPECT_THROW(npts_sample_paths(none, with_alpha(0.3), 1, 1, rng), DomainError);
  EXPECT_THROW(npts_sample_paths(none, with_alpha(kInf), 1, 1, rng), DomainError);
  EXPECT_THROW(npts_sample_paths({}, with_alpha(0.3), 1, 1, rng), DomainError);
}

TEST(NptsSamplePaths, ContextLengthLimitsTheWindow) {
  auto c = with_alpha(0.0, 500);
  c.context_length = 2;
  Rng rng(8);
  const auto paths = npts_sample_paths(values({100, 100, 1, 2}), c, 1, 1, rng);
  for (Eigen::Index i = 0; i < paths.rows(); ++i) EXPECT_LE(paths(i, 0), 2.0);
}

TEST(NptsPredictor, DeterministicPerRecordIndependentOfOrder) {
  NptsConfig c;
  c.alpha = 0.2;
  c.num_sample_paths = 50;
  c.seed = 11;
  NptsPredictor pred(c);
  const auto a = record_of(values({1, 5, 2, 8, 3, 9, 4}), "a");
  const auto b = record_of(values({7, 1, 7, 1, 7}), "b");
  const auto first = pred.predict(a, 3);
  pred.predict(b, 3);
  const auto again = pred.predict(a, 3);
  EXPECT_EQ(first.samples().paths, again.samples().paths);
  EXPECT_EQ(first.start(), add_steps(a.start, a.freq, 7));
  EXPECT_EQ(first.item_id(), "a");
}

TEST(NptsConfig, RoundTripAndValidation) {
  NptsConfig c;
  EXPECT_EQ(NptsConfig::from_config(parse_text(to_text(c.to_config()))), c);
  c.alpha = kInf;
  c.seasonal = true;
  c.kernel = NptsKernel::uniform;
  EXPECT_EQ(NptsConfig::from_config(parse_text(to_text(c.to_config()))), c);
  c.alpha = 0.125;
  EXPECT_EQ(NptsConfig::from_config(parse_text(to_text(c.to_config()))), c);
  NptsConfig bad;
  bad.num_sample_paths = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = NptsConfig{};
  bad.alpha = -1;
  EXPECT_THROW(bad.validate(), ConfigError);
}
