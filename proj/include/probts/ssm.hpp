#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "probts/model.hpp"

namespace probts {

/// Linear innovation state-space model
///   z_t = a_t' l_{t-1} + b_t + sigma_t * eps_t
///   l_t = F_t l_{t-1} + g_t * nu_t,       l_0 ~ N(mu0, diag(sigma0^2))
/// with eps_t, nu_t independent standard normals. Per-step sequences of
/// length 1 are broadcast over every step.
struct SsmParams {
  Eigen::VectorXd mu0;
  Eigen::VectorXd sigma0;
  std::vector<Eigen::MatrixXd> F;
  std::vector<Eigen::VectorXd> g;
  std::vector<Eigen::VectorXd> a;
  std::vector<double> b;
  std::vector<double> sigma;

  static SsmParams time_invariant(Eigen::VectorXd mu0, Eigen::VectorXd sigma0, Eigen::MatrixXd F,
                                  Eigen::VectorXd g, Eigen::VectorXd a, double b, double sigma);

  Eigen::Index state_dim() const { return mu0.size(); }
  /// Throws ConfigError unless every sequence has length 1 or covers `steps`.
  void validate(std::size_t steps) const;

  // 0-based step index i corresponds to time t = i + 1.
  const Eigen::MatrixXd& F_at(std::size_t i) const { return F[F.size() == 1 ? 0 : i]; }
  const Eigen::VectorXd& g_at(std::size_t i) const { return g[g.size() == 1 ? 0 : i]; }
  const Eigen::VectorXd& a_at(std::size_t i) const { return a[a.size() == 1 ? 0 : i]; }
  double b_at(std::size_t i) const { return b[b.size() == 1 ? 0 : i]; }
  double sigma_at(std::size_t i) const { return sigma[sigma.size() == 1 ? 0 : i]; }
};

struct FilterStep {
  Eigen::VectorXd predicted_mean;  // l_{t-1} | z_{1:t-1}
  Eigen::MatrixXd predicted_cov;
  Eigen::VectorXd filtered_mean;   // l_{t-1} | z_{1:t}
  Eigen::MatrixXd filtered_cov;
  double obs_mean = 0;             // one-step predictive of z_t
  double obs_var = 0;
  double loglik = 0;               // 0 at missing steps
  bool observed = false;
};

struct FilterResult {
  std::vector<FilterStep> steps;
  double log_likelihood = 0;
  Eigen::VectorXd next_mean;  // l_T | z_{1:T}
  Eigen::MatrixXd next_cov;
};

FilterResult kalman_filter(const SsmParams& params, std::span<const Observation> z);

struct SmoothedStep {
  double mean = 0;             // E[a_t' l_{t-1} + b_t | all observed]
  double signal_variance = 0;  // Var of the same
  double variance = 0;         // signal_variance + sigma_t^2: posterior predictive of z_t
};

/// Rauch-Tung-Striebel smoothing; throws DomainError when nothing is observed.
std::vector<SmoothedStep> kalman_smooth(const SsmParams& params, std::span<const Observation> z);

enum class PresetKind { local_level, level_trend, seasonal };

/// Free parameters of a preset. gamma holds one innovation strength per
/// component (level; level+trend; level+season).
struct SsmTheta {
  double sigma = 1.0;
  std::vector<double> gamma;
  std::vector<double> prior_mean;
  double prior_scale = 1.0;

  bool operator==(const SsmTheta&) const = default;
};

struct SsmPreset {
  PresetKind kind = PresetKind::local_level;
  int season_length = 1;  // seasonal only

  static SsmPreset local_level() { return {PresetKind::local_level, 1}; }
  static SsmPreset level_trend() { return {PresetKind::level_trend, 1}; }
  static SsmPreset seasonal(int season_length);
  static SsmPreset parse(std::string_view name, int season_length);
  std::string name() const;

  int state_dim() const;
  int num_components() const;
  /// Time-invariant parameters for theta.
  SsmParams expand(const SsmTheta& theta) const;
  /// Data-driven starting point for the optimizer.
  SsmTheta initial_theta(std::span<const Observation> z) const;

  bool operator==(const SsmPreset&) const = default;
};

struct FitResult {
  SsmTheta theta;
  double log_likelihood = 0;
  double initial_log_likelihood = 0;
  int iterations = 0;
  bool converged = false;
};

/// Maximum likelihood by Nelder-Mead over log-positive reparameterization.
FitResult fit_mle(const SsmPreset& preset, std::span<const Observation> z, int max_iters = 2000);

/// Draws l_T from the filtered posterior and rolls the model forward.
/// params must be time-invariant or cover z.size() + horizon steps.
Eigen::MatrixXd ssm_sample_paths(const SsmParams& params, std::span<const Observation> z, int horizon,
                                 int num_paths, Rng& rng);

Forecast forecast_sample_paths(const SsmParams& params, const TimeSeriesRecord& record, int horizon,
                               int num_paths, Rng& rng);

struct SsmEstimatorConfig {
  SsmPreset preset;
  int max_iters = 2000;
  int num_sample_paths = 100;
  std::uint64_t seed = 0;

  ConfigNode to_config() const;
  static SsmEstimatorConfig from_config(const ConfigNode& node);
  bool operator==(const SsmEstimatorConfig&) const = default;
};

/// Local model: parameters are fitted per series at prediction time.
class SsmEstimator final : public Estimator {
 public:
  explicit SsmEstimator(SsmEstimatorConfig config) : config_(config) {}
  std::unique_ptr<Predictor> train(const Source<TimeSeriesRecord>& data) const override;
  ConfigNode config() const override { return config_.to_config(); }

 private:
  SsmEstimatorConfig config_;
};

class SsmPredictor final : public Predictor {
 public:
  explicit SsmPredictor(SsmEstimatorConfig config) : config_(config) {}
  Forecast predict(const TimeSeriesRecord& record, int horizon) const override;
  ConfigNode config() const override { return config_.to_config(); }

 private:
  SsmEstimatorConfig config_;
};

}  // namespace probts
