#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "probts/model.hpp"

namespace probts {

enum class NptsKernel { exponential, uniform };

struct NptsConfig {
  /// Decay rate; kInf gives the naive forecaster. std::nullopt selects it per
  /// series so the most recent season carries half of the sampling weight.
  std::optional<double> alpha;
  NptsKernel kernel = NptsKernel::exponential;
  bool seasonal = false;
  /// 0 uses the frequency's default season length.
  int season_length = 0;
  int num_sample_paths = 100;
  /// Trailing history used for sampling; 0 uses the whole series.
  int context_length = 0;
  std::uint64_t seed = 0;

  void validate() const;
  ConfigNode to_config() const;
  static NptsConfig from_config(const ConfigNode& node);
  bool operator==(const NptsConfig&) const = default;
};

/// q_T(t) proportional to exp(-alpha (T - t)) for t = 0..T-1.
std::vector<double> npts_weights(int length, double alpha);

/// Alpha for which the last `recent` of `length` points carry half the weight
/// (0 when uniform weights already give them half).
double npts_auto_alpha(int length, int recent);

/// num_sample_paths x horizon. Multi-step paths slide a window of the last
/// T values over the history extended by the path's own predictions.
/// Missing values are never sampled.
Eigen::MatrixXd npts_sample_paths(std::span<const Observation> z, const NptsConfig& config,
                                  int season_length, int horizon, Rng& rng);

Forecast npts_forecast(const TimeSeriesRecord& record, const NptsConfig& config, int horizon, Rng& rng);

class NptsPredictor final : public Predictor {
 public:
  explicit NptsPredictor(NptsConfig config) : config_(config) {}
  Forecast predict(const TimeSeriesRecord& record, int horizon) const override;
  ConfigNode config() const override { return config_.to_config(); }

 private:
  NptsConfig config_;
};

/// Nothing to learn: train() validates and returns a predictor.
class NptsEstimator final : public Estimator {
 public:
  explicit NptsEstimator(NptsConfig config) : config_(config) { config_.validate(); }
  std::unique_ptr<Predictor> train(const Source<TimeSeriesRecord>& data) const override;
  ConfigNode config() const override { return config_.to_config(); }

 private:
  NptsConfig config_;
};

}  // namespace probts
