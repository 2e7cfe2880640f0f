#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "probts/transform.hpp"

using namespace probts;

namespace {

TimeSeriesRecord series(std::vector<Observation> target, const std::string& freq = "H",
                        const std::string& start = "2018-01-01 00:00:00") {
  TimeSeriesRecord r;
  r.item_id = "s";
  r.start = Timestamp::parse(start);
  r.freq = Frequency::parse(freq);
  r.target = std::move(target);
  return r;
}

std::vector<Observation> ramp(int n, double from = 1) {
  std::vector<Observation> v;
  for (int i = 0; i < n; ++i) v.emplace_back(from + i);
  return v;
}

}  // namespace

TEST(InstanceSplitter, TestModeTakesTheLastContext) {
  InstanceSplitter splitter(5, 3, TestSampling{}, 0);
  const auto r = series(ramp(10));
  const auto inst = splitter.split(r);
  ASSERT_EQ(inst.size(), 1u);
  EXPECT_EQ(inst[0].past_target, (std::vector<double>{6, 7, 8, 9, 10}));
  EXPECT_TRUE(inst[0].future_target.empty());
  EXPECT_EQ(inst[0].forecast_start, add_steps(r.start, r.freq, 10));
  EXPECT_EQ(inst[0].past_is_pad, (std::vector<std::uint8_t>(5, 0)));
}

TEST(InstanceSplitter, LeftPadsShortHistory) {
  InstanceSplitter splitter(6, 1, TestSampling{}, 0);
  const auto inst = splitter.split(series(ramp(4)));
  ASSERT_EQ(inst.size(), 1u);
  EXPECT_EQ(inst[0].past_is_pad, (std::vector<std::uint8_t>{1, 1, 0, 0, 0, 0}));
  EXPECT_EQ(inst[0].past_target, (std::vector<double>{0, 0, 1, 2, 3, 4}));
  EXPECT_EQ(inst[0].past_observed, (std::vector<std::uint8_t>{0, 0, 1, 1, 1, 1}));
}

TEST(InstanceSplitter, ObservedMaskMatchesMissing) {
  InstanceSplitter splitter(3, 1, TestSampling{}, 0);
  const auto inst = splitter.split(series({1.0, kMissing, 3.0}));
  EXPECT_EQ(inst[0].past_observed, (std::vector<std::uint8_t>{1, 0, 1}));
  EXPECT_EQ(inst[0].past_target[1], 0.0);
}

TEST(InstanceSplitter, TrainModeSkipsShortSeries) {
  InstanceSplitter splitter(4, 5, TrainSampling{1.0}, 1);
  EXPECT_TRUE(splitter.split(series(ramp(3))).empty());
  EXPECT_EQ(splitter.skipped_series(), 1u);
}

TEST(InstanceSplitter, TrainFutureIsFullyObservedAndAligned) {
  InstanceSplitter splitter(4, 3, TrainSampling{100.0}, 2);
  auto target = ramp(30);
  target[20] = kMissing;
  const auto r = series(target);
  const auto inst = splitter.split(r);
  ASSERT_FALSE(inst.empty());
  for (const auto& i : inst) {
    ASSERT_EQ(i.future_target.size(), 3u);
    ASSERT_EQ(i.past_target.size(), 4u);
    // Ramp value at step s is s + 1, so future_target[k] = offset(forecast_start) + k + 1.
    const auto offset = (i.forecast_start.seconds - r.start.seconds) / 3600;
    for (int k = 0; k < 3; ++k) {
      EXPECT_NE(offset + k, 20);
      EXPECT_EQ(i.future_target[k], static_cast<double>(offset + k + 1));
    }
  }
}

TEST(InstanceSplitter, ExpectedInstanceCount) {
  // 50 valid split points per series; keep probability 2/50.
  InstanceSplitter splitter(5, 1, TrainSampling{2.0}, 3);
  std::size_t total = 0;
  const int n = 4000;
  for (int i = 0; i < n; ++i) total += splitter.split(series(ramp(51))).size();
  const double mean = static_cast<double>(total) / n;
  const double sd = std::sqrt(50 * 0.04 * 0.96 / n);
  EXPECT_NEAR(mean, 2.0, 5 * sd);
}

TEST(InstanceSplitter, StreamingMatchesPerRecord) {
  std::vector<TimeSeriesRecord> recs{series(ramp(20)), series(ramp(2)), series(ramp(30, 5))};
  InstanceSplitter a(4, 2, TrainSampling{3.0}, 9), b(4, 2, TrainSampling{3.0}, 9);
  std::vector<TrainingInstance> direct;
  for (const auto& r : recs) {
    auto v = a.split(r);
    direct.insert(direct.end(), v.begin(), v.end());
  }
  const auto streamed = b.apply(stream_from(recs)).collect();
  ASSERT_EQ(direct.size(), streamed.size());
  for (std::size_t i = 0; i < direct.size(); ++i) {
    EXPECT_EQ(direct[i].past_target, streamed[i].past_target);
    EXPECT_EQ(direct[i].forecast_start, streamed[i].forecast_start);
  }
  EXPECT_EQ(b.skipped_series(), 1u);
}

TEST(MarkMissing, CarriesForward) {
  const auto r = mark_missing(series({1.0, kMissing, 3.0}));
  EXPECT_EQ(r.target, (std::vector<Observation>{1.0, 1.0, 3.0}));
  ASSERT_EQ(r.feat_dynamic_real.size(), 1u);
  EXPECT_EQ(r.feat_dynamic_real[0], (std::vector<double>{1, 0, 1}));
}

TEST(MarkMissing, AllMissingBecomesZeros) {
  const auto r = mark_missing(series({kMissing, kMissing}));
  EXPECT_EQ(r.target, (std::vector<Observation>{0.0, 0.0}));
  EXPECT_EQ(r.feat_dynamic_real[0], (std::vector<double>{0, 0}));
}

TEST(MarkMissing, NoPredecessorFillsZero) {
  const auto r = mark_missing(series({kMissing, 5.0}));
  EXPECT_EQ(r.target, (std::vector<Observation>{0.0, 5.0}));
  EXPECT_EQ(r.feat_dynamic_real[0], (std::vector<double>{0, 1}));
}

TEST(TimeFeatures, HourlyFromMondayMidnight) {
  const auto r = add_time_features(series(ramp(48), "H", "2018-01-01 00:00:00"));
  ASSERT_EQ(r.feat_dynamic_real.size(), 2u);
  EXPECT_DOUBLE_EQ(r.feat_dynamic_real[0][0], -0.5);
  EXPECT_DOUBLE_EQ(r.feat_dynamic_real[0][23], 0.5);
  EXPECT_DOUBLE_EQ(r.feat_dynamic_real[1][0], -0.5);  // Monday
  EXPECT_DOUBLE_EQ(r.feat_dynamic_real[1][24], 1.0 / 6 - 0.5);
}

TEST(TimeFeatures, MonthlyFromJanuary) {
  const auto r = add_time_features(series(ramp(12), "M", "2018-01-01"));
  ASSERT_EQ(r.feat_dynamic_real.size(), 1u);
  EXPECT_DOUBLE_EQ(r.feat_dynamic_real[0][0], -0.5);
  EXPECT_DOUBLE_EQ(r.feat_dynamic_real[0][11], 0.5);
}

TEST(TimeFeatures, ExtendsPastTheTarget) {
  const auto r = add_time_features(series(ramp(5), "D"), 3);
  for (const auto& f : r.feat_dynamic_real) {
    EXPECT_EQ(f.size(), 8u);
    for (double x : f) {
      EXPECT_GE(x, -0.5);
      EXPECT_LE(x, 0.5);
    }
  }
  EXPECT_EQ(static_cast<int>(r.feat_dynamic_real.size()), num_time_features(r.freq));
}

TEST(BoxCox, KnownValues) {
  EXPECT_DOUBLE_EQ(boxcox_forward(3.0, 1.0), 2.0);
  EXPECT_DOUBLE_EQ(boxcox_forward(std::exp(1.0), 0.0), 1.0);
  EXPECT_NEAR(boxcox_forward(4.0, 0.5), (std::sqrt(4.0) - 1) / 0.5, 1e-15);
  EXPECT_DOUBLE_EQ(boxcox_forward(4.0, 0.5), 2.0);
}

TEST(BoxCox, DomainErrors) {
  EXPECT_THROW(boxcox_forward(0.0, 0.0), DomainError);
  EXPECT_THROW(boxcox_forward(-1.0, -0.5), DomainError);
  EXPECT_THROW(boxcox_inverse(-3.0, 0.5), DomainError);
}

TEST(BoxCox, InverseRoundTrip) {
  Rng rng(5);
  std::uniform_real_distribution<double> z(1e-3, 100.0), lam(-2.0, 2.0);
  for (int i = 0; i < 10000; ++i) {
    const double x = z(rng);
    double l = lam(rng);
    if (l == 0) l = 0.1;
    EXPECT_LE(std::abs(boxcox_inverse(boxcox_forward(x, l), l) - x), 1e-10 * x) << "z=" << x << " lambda=" << l;
  }
}

TEST(Pipeline, EmptyIsIdentity) {
  const auto r = series({1.0, kMissing, 2.0});
  EXPECT_EQ(Pipeline().apply(r), r);
}

TEST(Pipeline, AppliesStepsLeftToRightAndIsAssociative) {
  const auto r = series({1.0, kMissing, 4.0}, "D");
  const Pipeline a({MarkMissingStep{}}), b({BoxCoxStep{0.0}}), c({TimeFeatureStep{2}});
  const auto left = a.then(b).then(c).apply(r);
  const auto right = a.then(b.then(c)).apply(r);
  EXPECT_EQ(left, right);
  EXPECT_EQ(left, c.apply(b.apply(a.apply(r))));
  EXPECT_DOUBLE_EQ(left.target[1].value(), 0.0);  // filled with 1, then log
  EXPECT_DOUBLE_EQ(left.target[2].value(), std::log(4.0));
}

TEST(Pipeline, ConfigRoundTrip) {
  const Pipeline p({MarkMissingStep{}, TimeFeatureStep{3}, BoxCoxStep{0.25}});
  EXPECT_EQ(Pipeline::from_config(p.to_config()), p);
  EXPECT_EQ(Pipeline::from_config(parse_text(to_text(p.to_config()))), p);
}
