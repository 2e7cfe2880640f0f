#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "probts/npts.hpp"
#include "probts/ssm.hpp"

namespace probts {

/// A predictive CDF for one step. An empty function means "not scored".
using Cdf = std::function<double(double)>;

/// 2 min(F, 1 - F).
double two_sided_pvalue(double cdf_value);

/// Step CDF of a sample with midpoint ties: (#{x < z} + #{x = z} / 2) / n.
class EmpiricalCdf {
 public:
  explicit EmpiricalCdf(std::vector<double> samples);
  double operator()(double z) const;

 private:
  std::vector<double> sorted_;
};

struct AnomalyConfig {
  enum class Method { cdf_pvalue, nll_percentile };

  Method method = Method::cdf_pvalue;
  double threshold = 1e-4;
  std::vector<double> levels{0.99, 0.999, 0.9999};
  /// Level whose threshold decides flagging in nll_percentile mode.
  double flag_level = 0.99;

  void validate() const;
  ConfigNode to_config() const;
  static AnomalyConfig from_config(const ConfigNode& node);
  bool operator==(const AnomalyConfig&) const = default;
};

struct AnomalyStep {
  Timestamp time;
  Observation value;
  /// p-value or NLL; NaN for unscored steps.
  double score = kNaN;
  bool flagged = false;
  double threshold = kNaN;
};

struct AnomalyReport {
  std::string item_id;
  /// "p_value" or "nll".
  std::string score_name;
  std::vector<AnomalyStep> steps;

  std::size_t num_flagged() const;
  std::size_t num_scored() const;
};

/// Flags observed steps whose two-sided p-value falls below threshold.
AnomalyReport detect_cdf(std::span<const Cdf> cdfs, std::span<const Observation> observations, double threshold,
                         Timestamp start = {}, Frequency freq = {}, std::string item_id = {});

struct NllThresholds {
  std::vector<double> levels;
  std::vector<double> values;
  std::size_t num_points = 0;

  /// Threshold for a calibrated level; throws ConfigError for unknown levels.
  double at(double level) const;
};

/// Per-step negative log-likelihood of a record, NaN where the step is missing.
using StepNll = std::function<std::vector<double>(const TimeSeriesRecord&)>;

/// Per level, the smallest pooled per-step NLL whose empirical CDF reaches it.
NllThresholds calibrate_nll(const StepNll& model, Stream<TimeSeriesRecord> records, std::span<const double> levels);

/// Flags steps whose NLL exceeds the threshold calibrated at `level`.
AnomalyReport detect_nll(const StepNll& model, const TimeSeriesRecord& record, const NllThresholds& thresholds,
                         double level);

/// Negative one-step predictive log-density per step.
std::vector<double> ssm_step_nll(const SsmParams& params, std::span<const Observation> z);

/// Gaussian one-step predictive CDF per step.
std::vector<Cdf> ssm_predictive_cdfs(const SsmParams& params, std::span<const Observation> z);

/// SSM scoring with either fixed parameters or a per-series maximum likelihood fit.
class SsmScorer {
 public:
  SsmScorer(SsmPreset preset, std::optional<SsmTheta> theta = std::nullopt, int max_iters = 2000);

  SsmParams params_for(const TimeSeriesRecord& record) const;
  std::vector<double> nll(const TimeSeriesRecord& record) const;
  std::vector<Cdf> cdfs(const TimeSeriesRecord& record) const;

  StepNll as_step_nll() const;

 private:
  SsmPreset preset_;
  std::optional<SsmTheta> theta_;
  int max_iters_;
};

/// Step t is scored by the empirical CDF of one-step NPTS samples drawn from
/// z[0..t); the first `min_history` steps are not scored.
std::vector<Cdf> npts_rolling_cdfs(const TimeSeriesRecord& record, const NptsConfig& config, int min_history,
                                   Rng& rng);

/// CSV columns item_id, time, value, score, flagged, threshold.
void write_anomaly_header(std::ostream& out);
void write_anomaly_rows(std::ostream& out, const AnomalyReport& report);

}  // namespace probts
