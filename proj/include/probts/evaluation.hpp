#pragma once

#include <cmath>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "probts/model.hpp"

namespace probts {

inline const std::vector<double> kDefaultQuantiles{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};

struct SplitSpec {
  int prediction_length = 1;
  /// 1 gives a simple train/test split.
  int num_rolling_windows = 1;
  /// Steps between window starts; 0 means prediction_length.
  int stride = 0;

  void validate() const;
  int effective_stride() const { return stride > 0 ? stride : prediction_length; }
  ConfigNode to_config() const;
  static SplitSpec from_config(const ConfigNode& node);
  bool operator==(const SplitSpec&) const = default;
};

/// One evaluation window: the history to forecast from and the held-out truth.
struct BacktestWindow {
  TimeSeriesRecord history;
  std::vector<Observation> truth;
  /// 0 is the newest window.
  int window = 0;
};

/// Window k truncates the series at T - k*stride; the truth is the last
/// prediction_length values of that truncation. Windows come oldest first.
class WindowSplitter {
 public:
  explicit WindowSplitter(SplitSpec spec);

  /// Empty when the series is too short for a single window (counted as skipped).
  std::vector<BacktestWindow> split(const TimeSeriesRecord& record);
  Stream<BacktestWindow> apply(Stream<TimeSeriesRecord> records);

  /// Number of windows available for a series of the given length.
  int num_windows(std::size_t length) const;
  /// The series cut just before its oldest evaluation window; nullopt when it has none.
  std::optional<TimeSeriesRecord> training_view(const TimeSeriesRecord& record) const;

  std::size_t skipped_series() const { return skipped_; }
  const SplitSpec& spec() const { return spec_; }

 private:
  SplitSpec spec_;
  std::size_t skipped_ = 0;
};

struct MetricRow {
  std::string item_id;
  int window = 0;
  Timestamp forecast_start;
  /// Observed truth steps actually scored.
  int num_steps = 0;
  double mase = kNaN;
  double mape = kNaN;
  double smape = kNaN;
  /// Pinball loss summed over the horizon, one entry per evaluated level.
  std::vector<double> quantile_loss;
  /// Mean over the horizon of the per-step grid CRPS.
  double crps = kNaN;
  double abs_target_sum = 0;
  /// Sum over the horizon of |truth - median|.
  double abs_error = 0;
  /// Skipped zero-denominator terms.
  int mape_skipped = 0;
  int smape_skipped = 0;
  /// Why a metric is NaN, empty otherwise.
  std::string note;
};

struct AggregateReport {
  std::vector<double> levels;
  std::size_t item_count = 0;
  double wmape = kNaN;
  std::vector<double> weighted_quantile_loss;
  /// Mean over levels of the weighted quantile loss (normalized CRPS).
  double crps = kNaN;
  double mean_mase = kNaN;
  double mean_mape = kNaN;
  double mean_smape = kNaN;
  double mean_item_crps = kNaN;
  double abs_target_sum = 0;
  double abs_error = 0;

  /// Flat "key=value" lines.
  std::string to_key_value() const;
  nlohmann::ordered_json to_json() const;
};

/// Streaming sums; merge is a commutative monoid operation.
class MetricAccumulator {
 public:
  explicit MetricAccumulator(std::vector<double> levels = kDefaultQuantiles);
  void add(const MetricRow& row);
  void merge(const MetricAccumulator& other);
  AggregateReport report() const;

 private:
  struct Mean {
    double sum = 0;
    std::size_t count = 0;
    void add(double x) {
      if (std::isfinite(x)) {
        sum += x;
        ++count;
      }
    }
    double value() const { return count ? sum / static_cast<double>(count) : kNaN; }
  };

  std::vector<double> levels_;
  std::size_t items_ = 0;
  double abs_target_ = 0;
  double abs_error_ = 0;
  std::vector<double> pinball_;
  Mean mase_, mape_, smape_, crps_;
};

/// Mean |z_t - z_{t-m}| over observed pairs of the history. Falls back to m = 1
/// when the history is no longer than m; NaN when no pair is available.
double seasonal_naive_scale(std::span<const Observation> history, int season_length);

/// Scores one forecast against its truth window. `season_length` 0 uses the frequency default.
MetricRow evaluate_window(const BacktestWindow& window, const Forecast& forecast,
                          std::span<const double> levels, int season_length = 0);

void write_metrics_header(std::ostream& out, std::span<const double> levels);
void write_metrics_row(std::ostream& out, const MetricRow& row);

using MetricSink = std::function<void(const MetricRow&)>;

struct BacktestOptions {
  SplitSpec split;
  std::vector<double> quantiles = kDefaultQuantiles;
  /// 0 uses the frequency default.
  int season_length = 0;
};

/// Predicts every window of every test record and scores it.
AggregateReport backtest(const Predictor& predictor, const Source<TimeSeriesRecord>& test,
                         const BacktestOptions& options, const MetricSink& sink = {});

/// Trains on the training views of `train` (cut before each series' oldest
/// evaluation window) and then backtests on `test`.
AggregateReport backtest(const Estimator& estimator, const Source<TimeSeriesRecord>& train,
                         const Source<TimeSeriesRecord>& test, const BacktestOptions& options,
                         const MetricSink& sink = {});

}  // namespace probts
