#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "probts/model.hpp"
#include "probts/transform.hpp"

namespace probts {

enum class Activation { relu, tanh };

struct MlpQrConfig {
  int context_length = 30;
  int prediction_length = 1;
  std::vector<int> hidden_cells{40, 40, 40};
  Activation activation = Activation::relu;
  std::vector<double> quantiles{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  /// Expected training windows drawn per series per pass over the data.
  double instances_per_series = 1.0;

  void validate() const;
  int output_size() const { return prediction_length * static_cast<int>(quantiles.size()); }
  bool operator==(const MlpQrConfig&) const = default;
};

struct TrainerConfig {
  int batch_size = 32;
  int num_batches = 5000;
  double initial_lr = 1e-3;
  double lr_decay_factor = 0.5;
  int lr_patience_batches = 300;
  double min_lr = 5e-5;
  double clip_gradient = 10.0;
  std::uint64_t seed = 0;

  void validate() const;
  ConfigNode to_config() const;
  static TrainerConfig from_config(const ConfigNode& node);
  bool operator==(const TrainerConfig&) const = default;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

struct MlpParameters {
  std::vector<DenseLayer> layers;

  /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  static MlpParameters initialize(const MlpQrConfig& config, Rng& rng);
  static MlpParameters zeros_like(const MlpParameters& other);

  std::size_t num_values() const;
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);
  bool operator==(const MlpParameters& other) const;
};

/// Columns of `inputs` are examples; returns output_size x batch.
Eigen::MatrixXd mlp_forward(const MlpParameters& params, Activation activation, const Eigen::MatrixXd& inputs);

/// One example: prediction_length x |quantiles|.
Eigen::MatrixXd mlp_forward(const MlpParameters& params, const MlpQrConfig& config,
                            std::span<const double> past_scaled);

struct LossAndGradient {
  double loss = 0;
  MlpParameters gradient;
};

/// Mean pinball loss over batch, horizon and quantiles. targets is
/// prediction_length x batch; output row k*|quantiles| + j is step k, level j.
LossAndGradient quantile_loss_gradient(const MlpParameters& params, const MlpQrConfig& config,
                                       const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets);

class AdamOptimizer {
 public:
  explicit AdamOptimizer(const MlpParameters& shape, double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8);
  void step(MlpParameters& params, const MlpParameters& gradient, double lr);

 private:
  MlpParameters m_, v_;
  double beta1_, beta2_, eps_;
  int t_ = 0;
};

/// Rescales gradient so its global L2 norm is at most max_norm. Returns the original norm.
double clip_global_norm(MlpParameters& gradient, double max_norm);

/// Tracks the best batch loss; decays the rate after `patience` batches without
/// a relative improvement of 1e-6, resetting the counter on every decay.
class PlateauSchedule {
 public:
  explicit PlateauSchedule(const TrainerConfig& config);
  double rate() const { return lr_; }
  void observe(double loss);

 private:
  TrainerConfig config_;
  double lr_;
  double best_ = kInf;
  int since_best_ = 0;
};

/// s = 1 + mean |x| over observed entries.
double instance_scale(std::span<const double> past, std::span<const std::uint8_t> observed);

struct TrainingReport {
  std::vector<double> batch_losses;
  std::vector<double> learning_rates;
};

/// Runs the training loop over instances from `source`, cycling it as needed.
MlpParameters train_mlp(const MlpQrConfig& config, const TrainerConfig& trainer,
                        const Source<TrainingInstance>& source, TrainingReport* report = nullptr);

class MlpQrPredictor final : public Predictor {
 public:
  MlpQrPredictor(MlpQrConfig config, TrainerConfig trainer, MlpParameters params);

  /// horizon must not exceed prediction_length; rows are sorted across levels.
  Forecast predict(const TimeSeriesRecord& record, int horizon) const override;
  ConfigNode config() const override;

  const MlpParameters& parameters() const { return params_; }
  const MlpQrConfig& model_config() const { return config_; }

  /// Writes <dir>/model.bin (flat little-endian float64 tensor) and <dir>/model_config.txt.
  void save(const std::filesystem::path& dir) const;
  static MlpQrPredictor load(const std::filesystem::path& dir);

 private:
  MlpQrConfig config_;
  TrainerConfig trainer_;
  MlpParameters params_;
};

class MlpQrEstimator final : public Estimator {
 public:
  MlpQrEstimator(MlpQrConfig config, TrainerConfig trainer);
  std::unique_ptr<Predictor> train(const Source<TimeSeriesRecord>& data) const override;
  MlpQrPredictor train_predictor(const Source<TimeSeriesRecord>& data, TrainingReport* report = nullptr) const;
  ConfigNode config() const override;
  static MlpQrEstimator from_config(const ConfigNode& node);

  const MlpQrConfig& model_config() const { return config_; }
  const TrainerConfig& trainer_config() const { return trainer_; }

 private:
  MlpQrConfig config_;
  TrainerConfig trainer_;
};

}  // namespace probts
