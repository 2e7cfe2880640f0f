#pragma once

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "probts/config.hpp"
#include "probts/dataset.hpp"

namespace probts {

struct TrainingInstance {
  std::string item_id;
  std::vector<double> past_target;     // context_length
  std::vector<double> future_target;   // prediction_length (empty in test mode)
  std::vector<std::uint8_t> past_is_pad;
  std::vector<std::uint8_t> past_observed;
  Eigen::MatrixXd past_feat;           // context_length x D
  Eigen::MatrixXd future_feat;         // prediction_length x D
  Timestamp forecast_start;
};

struct TrainSampling {
  double expected_instances_per_series = 1.0;
};
struct TestSampling {};
using SplitMode = std::variant<TrainSampling, TestSampling>;

/// Cuts (context, future) windows out of series. In train mode each valid
/// split point is kept independently with probability expected / #valid.
class InstanceSplitter {
 public:
  InstanceSplitter(int context_length, int prediction_length, SplitMode mode, std::uint64_t seed);

  std::vector<TrainingInstance> split(const TimeSeriesRecord& record);
  Stream<TrainingInstance> apply(Stream<TimeSeriesRecord> records);

  /// Series that had no valid split point.
  std::size_t skipped_series() const { return skipped_; }
  int context_length() const { return context_; }
  int prediction_length() const { return prediction_; }

 private:
  TrainingInstance make_instance(const TimeSeriesRecord& record, std::int64_t split_point,
                                 bool with_future) const;

  int context_;
  int prediction_;
  SplitMode mode_;
  Rng rng_;
  std::size_t skipped_ = 0;
};

/// Carry-forward fill of missing targets (0 before the first observation) and
/// an appended observed-indicator feature, zero-extended to the longest
/// existing dynamic feature.
TimeSeriesRecord mark_missing(TimeSeriesRecord record);

/// Appends calendar features scaled to [-0.5, 0.5], covering
/// max(target length + extra_steps, longest dynamic feature) steps.
///   minute: minute-of-hour, hour-of-day
///   hour:   hour-of-day, day-of-week
///   day:    day-of-week, day-of-month
///   week:   week-of-year
///   month:  month-of-year
///   quarter: quarter-of-year
///   year:   none
TimeSeriesRecord add_time_features(TimeSeriesRecord record, int extra_steps = 0);

/// Number of calendar features add_time_features appends for freq.
int num_time_features(Frequency freq);

double boxcox_forward(double z, double lambda);
double boxcox_inverse(double y, double lambda);
std::vector<double> boxcox_forward(std::span<const double> values, double lambda);
std::vector<double> boxcox_inverse(std::span<const double> values, double lambda);

struct MarkMissingStep {
  bool operator==(const MarkMissingStep&) const = default;
};
struct TimeFeatureStep {
  int extra_steps = 0;
  bool operator==(const TimeFeatureStep&) const = default;
};
/// Applies Box-Cox to observed target values.
struct BoxCoxStep {
  double lambda = 0.0;
  bool operator==(const BoxCoxStep&) const = default;
};
using TransformStep = std::variant<MarkMissingStep, TimeFeatureStep, BoxCoxStep>;

class Pipeline {
 public:
  Pipeline() = default;
  explicit Pipeline(std::vector<TransformStep> steps) : steps_(std::move(steps)) {}

  Pipeline then(const Pipeline& other) const;
  Pipeline then(TransformStep step) const;

  TimeSeriesRecord apply(TimeSeriesRecord record) const;
  Stream<TimeSeriesRecord> apply(Stream<TimeSeriesRecord> records) const;

  const std::vector<TransformStep>& steps() const { return steps_; }

  ConfigNode to_config() const;
  static Pipeline from_config(const ConfigNode& node);

  bool operator==(const Pipeline&) const = default;

 private:
  std::vector<TransformStep> steps_;
};

}  // namespace probts
