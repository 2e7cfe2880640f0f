#pragma once

#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "probts/dataset.hpp"

namespace probts {

/// n_paths x horizon.
struct SamplePaths {
  Eigen::MatrixXd paths;
};

/// horizon x levels; each row non-decreasing.
struct QuantileGrid {
  std::vector<double> levels;
  Eigen::MatrixXd values;
};

class Forecast {
 public:
  Forecast(SamplePaths samples, Timestamp start, Frequency freq, std::string item_id);
  Forecast(QuantileGrid grid, Timestamp start, Frequency freq, std::string item_id);

  int horizon() const;
  bool is_sample_paths() const { return std::holds_alternative<SamplePaths>(repr_); }
  const SamplePaths& samples() const { return std::get<SamplePaths>(repr_); }
  const QuantileGrid& grid() const { return std::get<QuantileGrid>(repr_); }

  /// Sample paths: order statistics at position (n-1)q, linearly interpolated.
  /// Quantile grid: exact at stored levels, interpolated between, clamped outside.
  std::vector<double> quantile(double q) const;
  /// True when q lies outside a quantile grid's stored levels (result is clamped).
  bool extrapolates(double q) const;

  /// Per-step path mean; the median for quantile grids.
  std::vector<double> mean() const;
  bool mean_is_median() const { return !is_sample_paths(); }

  /// Per-path sum over steps [begin, end).
  std::vector<double> aggregate_sum(int begin, int end) const;

  const Timestamp& start() const { return start_; }
  const Frequency& freq() const { return freq_; }
  const std::string& item_id() const { return item_id_; }
  Timestamp time_at(int step) const { return add_steps(start_, freq_, step); }

 private:
  std::variant<SamplePaths, QuantileGrid> repr_;
  Eigen::MatrixXd sorted_;  // column-sorted copy of paths
  Timestamp start_;
  Frequency freq_;
  std::string item_id_;
};

/// Pinball loss of predicting `prediction` as the q-quantile of `target`.
double pinball_loss(double target, double prediction, double q);

/// Empirical quantile of sorted values at position (n-1)q.
double sorted_quantile(std::span<const double> sorted, double q);

/// CSV with columns time, observed, q<levels...>, mean. The trailing
/// `history_steps` observations of `history` precede the forecast rows;
/// `truth` (optional) fills the observed column over the horizon.
void write_plot_data(std::ostream& out, const Forecast& forecast, const TimeSeriesRecord* history,
                     int history_steps, std::span<const double> levels,
                     std::span<const Observation> truth = {});

}  // namespace probts
