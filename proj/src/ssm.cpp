#include "probts/ssm.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

namespace probts {

namespace {

constexpr double kLog2Pi = 1.83787706640934548356;

void symmetrize(Eigen::MatrixXd& m) { m = 0.5 * (m + m.transpose()).eval(); }

}  // namespace

// Parameters ----------------------------------------------------------------

SsmParams SsmParams::time_invariant(Eigen::VectorXd mu0, Eigen::VectorXd sigma0, Eigen::MatrixXd F,
                                    Eigen::VectorXd g, Eigen::VectorXd a, double b, double sigma) {
  SsmParams p;
  p.mu0 = std::move(mu0);
  p.sigma0 = std::move(sigma0);
  p.F = {std::move(F)};
  p.g = {std::move(g)};
  p.a = {std::move(a)};
  p.b = {b};
  p.sigma = {sigma};
  return p;
}

void SsmParams::validate(std::size_t steps) const {
  const auto L = state_dim();
  if (L < 1) throw ConfigError("SsmParams: empty state");
  if (sigma0.size() != L) throw ConfigError("SsmParams: sigma0 size mismatch");
  if ((sigma0.array() < 0).any()) throw ConfigError("SsmParams: sigma0 must be non-negative");
  auto check_len = [&](std::size_t n, const char* what) {
    if (n != 1 && n < steps) {
      throw ConfigError(std::string("SsmParams: ") + what + " covers " + std::to_string(n) +
                        " steps, need " + std::to_string(steps));
    }
    if (n == 0) throw ConfigError(std::string("SsmParams: ") + what + " is empty");
  };
  check_len(F.size(), "F");
  check_len(g.size(), "g");
  check_len(a.size(), "a");
  check_len(b.size(), "b");
  check_len(sigma.size(), "sigma");
  for (const auto& m : F) {
    if (m.rows() != L || m.cols() != L) throw ConfigError("SsmParams: F shape mismatch");
  }
  for (const auto& v : g) {
    if (v.size() != L) throw ConfigError("SsmParams: g size mismatch");
  }
  for (const auto& v : a) {
    if (v.size() != L) throw ConfigError("SsmParams: a size mismatch");
  }
  for (double s : sigma) {
    if (!(s > 0)) throw ConfigError("SsmParams: sigma must be positive");
  }
}

// Filtering -----------------------------------------------------------------

FilterResult kalman_filter(const SsmParams& params, std::span<const Observation> z) {
  params.validate(z.size());
  FilterResult out;
  out.steps.reserve(z.size());
  Eigen::VectorXd m = params.mu0;
  Eigen::MatrixXd P = params.sigma0.array().square().matrix().asDiagonal();

  for (std::size_t i = 0; i < z.size(); ++i) {
    const auto& a = params.a_at(i);
    const double sigma = params.sigma_at(i);
    FilterStep step;
    step.predicted_mean = m;
    step.predicted_cov = P;
    step.obs_mean = a.dot(m) + params.b_at(i);
    const Eigen::VectorXd Pa = P * a;
    step.obs_var = a.dot(Pa) + sigma * sigma;

    if (z[i]) {
      step.observed = true;
      const double v = *z[i] - step.obs_mean;
      const double S = step.obs_var;
      step.loglik = -0.5 * (kLog2Pi + std::log(S) + v * v / S);
      if (!std::isfinite(step.loglik) || !(S > 0)) {
        throw NumericalError("non-finite log-likelihood increment", i + 1);
      }
      out.log_likelihood += step.loglik;
      const Eigen::VectorXd K = Pa / S;
      m = m + K * v;
      P = P - K * Pa.transpose();
      symmetrize(P);
    }
    step.filtered_mean = m;
    step.filtered_cov = P;

    const auto& F = params.F_at(i);
    const auto& g = params.g_at(i);
    m = F * m;
    P = F * P * F.transpose() + g * g.transpose();
    symmetrize(P);
    out.steps.push_back(std::move(step));
  }
  out.next_mean = std::move(m);
  out.next_cov = std::move(P);
  return out;
}

std::vector<SmoothedStep> kalman_smooth(const SsmParams& params, std::span<const Observation> z) {
  if (std::none_of(z.begin(), z.end(), [](const Observation& o) { return o.has_value(); })) {
    throw DomainError("kalman_smooth: no observed values");
  }
  const auto filtered = kalman_filter(params, z);
  const std::size_t n = z.size();
  std::vector<Eigen::VectorXd> mean(n);
  std::vector<Eigen::MatrixXd> cov(n);
  mean[n - 1] = filtered.steps[n - 1].filtered_mean;
  cov[n - 1] = filtered.steps[n - 1].filtered_cov;
  for (std::size_t i = n - 1; i-- > 0;) {
    const auto& cur = filtered.steps[i];
    const auto& next = filtered.steps[i + 1];
    const auto& F = params.F_at(i);
    // J = P'_i F' P_{i+1}^+, computed as the transpose of the min-norm solve.
    const Eigen::MatrixXd Jt =
        next.predicted_cov.completeOrthogonalDecomposition().solve(F * cur.filtered_cov);
    const Eigen::MatrixXd J = Jt.transpose();
    mean[i] = cur.filtered_mean + J * (mean[i + 1] - next.predicted_mean);
    cov[i] = cur.filtered_cov + J * (cov[i + 1] - next.predicted_cov) * Jt;
    symmetrize(cov[i]);
  }
  std::vector<SmoothedStep> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = params.a_at(i);
    out[i].mean = a.dot(mean[i]) + params.b_at(i);
    out[i].signal_variance = std::max(0.0, a.dot(cov[i] * a));
    const double s = params.sigma_at(i);
    out[i].variance = out[i].signal_variance + s * s;
  }
  return out;
}

// Presets -------------------------------------------------------------------

SsmPreset SsmPreset::seasonal(int season_length) {
  if (season_length < 2) throw ConfigError("seasonal preset needs season_length >= 2");
  return {PresetKind::seasonal, season_length};
}

SsmPreset SsmPreset::parse(std::string_view name, int season_length) {
  if (name == "local_level") return local_level();
  if (name == "level_trend") return level_trend();
  if (name == "seasonal") return seasonal(season_length);
  throw ConfigError("unknown ssm preset '" + std::string(name) + "'");
}

std::string SsmPreset::name() const {
  switch (kind) {
    case PresetKind::local_level: return "local_level";
    case PresetKind::level_trend: return "level_trend";
    case PresetKind::seasonal: return "seasonal";
  }
  return "?";
}

int SsmPreset::state_dim() const {
  switch (kind) {
    case PresetKind::local_level: return 1;
    case PresetKind::level_trend: return 2;
    case PresetKind::seasonal: return season_length;  // level + (m - 1) seasonal states
  }
  return 0;
}

int SsmPreset::num_components() const { return kind == PresetKind::local_level ? 1 : 2; }

SsmParams SsmPreset::expand(const SsmTheta& theta) const {
  const int L = state_dim();
  if (static_cast<int>(theta.gamma.size()) != num_components() ||
      static_cast<int>(theta.prior_mean.size()) != L) {
    throw ConfigError("SsmTheta does not match preset " + name());
  }
  Eigen::MatrixXd F = Eigen::MatrixXd::Zero(L, L);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(L);
  Eigen::VectorXd a = Eigen::VectorXd::Zero(L);
  switch (kind) {
    case PresetKind::local_level:
      F(0, 0) = 1;
      a(0) = 1;
      g(0) = theta.gamma[0];
      break;
    case PresetKind::level_trend:
      F << 1, 1, 0, 1;
      a(0) = 1;
      g(0) = theta.gamma[0];
      g(1) = theta.gamma[1];
      break;
    case PresetKind::seasonal:
      // State: level, current seasonal effect, then the m-2 previous effects.
      F(0, 0) = 1;
      for (int j = 1; j < L; ++j) F(1, j) = -1;
      for (int j = 2; j < L; ++j) F(j, j - 1) = 1;
      a(0) = 1;
      a(1) = 1;
      g(0) = theta.gamma[0];
      g(1) = theta.gamma[1];
      break;
  }
  Eigen::VectorXd mu0 = Eigen::Map<const Eigen::VectorXd>(theta.prior_mean.data(), L);
  Eigen::VectorXd sigma0 = Eigen::VectorXd::Constant(L, theta.prior_scale);
  return SsmParams::time_invariant(std::move(mu0), std::move(sigma0), std::move(F), std::move(g),
                                   std::move(a), 0.0, theta.sigma);
}

namespace {

struct Moments {
  double mean = 0, stddev = 0, mean_abs = 0;
  std::size_t count = 0;
};

Moments moments(std::span<const Observation> z) {
  Moments m;
  for (const auto& v : z) {
    if (!v) continue;
    ++m.count;
    m.mean += *v;
    m.mean_abs += std::abs(*v);
  }
  if (m.count == 0) return m;
  m.mean /= static_cast<double>(m.count);
  m.mean_abs /= static_cast<double>(m.count);
  double ss = 0;
  for (const auto& v : z) {
    if (v) ss += (*v - m.mean) * (*v - m.mean);
  }
  m.stddev = std::sqrt(ss / static_cast<double>(m.count));
  return m;
}

double data_scale(std::span<const Observation> z) {
  const auto m = moments(z);
  return std::max({m.stddev, 1e-3 * m.mean_abs, 1e-8});
}

}  // namespace

SsmTheta SsmPreset::initial_theta(std::span<const Observation> z) const {
  const auto mom = moments(z);
  const double scale = data_scale(z);
  SsmTheta theta;
  theta.sigma = 0.5 * scale;
  theta.gamma.assign(num_components(), 0.1 * scale);
  theta.prior_scale = scale;
  theta.prior_mean.assign(state_dim(), 0.0);

  const std::size_t head = std::min<std::size_t>(z.size(), kind == PresetKind::seasonal ? season_length : 10);
  double level = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < head; ++i) {
    if (z[i]) {
      level += *z[i];
      ++n;
    }
  }
  theta.prior_mean[0] = n ? level / static_cast<double>(n) : mom.mean;

  if (kind == PresetKind::seasonal && z.size() >= static_cast<std::size_t>(season_length)) {
    const int m = season_length;
    bool complete = true;
    for (int i = 0; i < m; ++i) complete = complete && z[i].has_value();
    if (complete) {
      // Effect of step 1 first, then the effects of steps m, m-1, ..., 3.
      auto dev = [&](int step) { return *z[step - 1] - theta.prior_mean[0]; };
      theta.prior_mean[1] = dev(1);
      for (int k = 2; k < m; ++k) theta.prior_mean[k] = dev(m + 2 - k);
    }
  }
  return theta;
}

// Fitting -------------------------------------------------------------------

namespace {

constexpr double kFloor = 1e-6;

struct Packing {
  const SsmPreset& preset;
  double scale;

  std::size_t size() const { return 2 + preset.num_components() + preset.state_dim(); }

  double to_positive(double u) const { return scale * (kFloor + std::exp(u)); }
  double from_positive(double p) const { return std::log(std::max(p / scale - kFloor, 1e-300)); }

  std::vector<double> pack(const SsmTheta& t) const {
    std::vector<double> u;
    u.push_back(from_positive(t.sigma));
    for (double g : t.gamma) u.push_back(from_positive(g));
    for (double m : t.prior_mean) u.push_back(m / scale);
    u.push_back(from_positive(t.prior_scale));
    return u;
  }

  SsmTheta unpack(const double* u) const {
    SsmTheta t;
    std::size_t k = 0;
    t.sigma = to_positive(u[k++]);
    for (int i = 0; i < preset.num_components(); ++i) t.gamma.push_back(to_positive(u[k++]));
    for (int i = 0; i < preset.state_dim(); ++i) t.prior_mean.push_back(scale * u[k++]);
    t.prior_scale = to_positive(u[k++]);
    return t;
  }
};

struct Objective {
  const SsmPreset& preset;
  std::span<const Observation> z;
  Packing packing;

  double operator()(const double* u) const {
    try {
      const double ll = kalman_filter(preset.expand(packing.unpack(u)), z).log_likelihood;
      return std::isfinite(ll) ? -ll : 1e300;
    } catch (const NumericalError&) {
      return 1e300;
    }
  }
};

double gsl_objective(const gsl_vector* x, void* params) {
  const auto* obj = static_cast<const Objective*>(params);
  return (*obj)(x->data);
}

struct NmOutcome {
  std::vector<double> best;
  double value;
  int iterations;
  bool converged;
};

NmOutcome nelder_mead(const Objective& obj, std::vector<double> start, double step, int max_iters) {
  const std::size_t n = start.size();
  gsl_multimin_function fn{&gsl_objective, n, const_cast<Objective*>(&obj)};
  gsl_vector* x = gsl_vector_alloc(n);
  gsl_vector* ss = gsl_vector_alloc(n);
  for (std::size_t i = 0; i < n; ++i) gsl_vector_set(x, i, start[i]);
  gsl_vector_set_all(ss, step);
  gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n);
  gsl_multimin_fminimizer_set(s, &fn, x, ss);

  int iter = 0;
  bool converged = false;
  while (iter < max_iters) {
    ++iter;
    if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
    if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), 1e-8) == GSL_SUCCESS) {
      converged = true;
      break;
    }
  }
  NmOutcome out{std::vector<double>(s->x->data, s->x->data + n), s->fval, iter, converged};
  gsl_multimin_fminimizer_free(s);
  gsl_vector_free(ss);
  gsl_vector_free(x);
  return out;
}

}  // namespace

FitResult fit_mle(const SsmPreset& preset, std::span<const Observation> z, int max_iters) {
  const auto observed = std::count_if(z.begin(), z.end(), [](const Observation& o) { return o.has_value(); });
  if (z.size() < 2 || observed < 2) throw DomainError("fit_mle: need at least two observed values");
  gsl_set_error_handler_off();

  const SsmTheta init = preset.initial_theta(z);
  Objective obj{preset, z, Packing{preset, data_scale(z)}};
  std::vector<double> u = obj.packing.pack(init);
  const double f0 = obj(u.data());
  if (!(f0 < 1e300)) throw NumericalError("fit_mle: non-finite log-likelihood at initialization");

  FitResult result;
  result.initial_log_likelihood = -f0;
  double best = f0;
  int budget = max_iters;
  double step = 1.0;
  // Restart from the incumbent until a pass no longer improves it.
  for (int pass = 0; pass < 4 && budget > 0; ++pass) {
    const auto nm = nelder_mead(obj, u, step, budget);
    budget -= nm.iterations;
    result.iterations += nm.iterations;
    const bool improved = nm.value < best - 1e-9 * std::max(1.0, std::abs(best));
    if (nm.value < best) {
      best = nm.value;
      u = nm.best;
    }
    result.converged = nm.converged;
    if (!improved && nm.converged) break;
    step = 0.25;
  }
  result.theta = obj.packing.unpack(u.data());
  result.log_likelihood = -best;
  if (!result.converged) log::debug("fit_mle: iteration budget exhausted, returning best-so-far");
  return result;
}

// Forecasting ---------------------------------------------------------------

Eigen::MatrixXd ssm_sample_paths(const SsmParams& params, std::span<const Observation> z, int horizon,
                                 int num_paths, Rng& rng) {
  if (horizon < 1) throw ConfigError("horizon must be positive");
  if (num_paths < 1) throw ConfigError("num_paths must be positive");
  params.validate(z.size() + horizon);
  const auto filtered = kalman_filter(params, z);
  const auto L = params.state_dim();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(filtered.next_cov);
  const Eigen::MatrixXd factor =
      eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd paths(num_paths, horizon);
  Eigen::VectorXd xi(L);
  for (int p = 0; p < num_paths; ++p) {
    for (Eigen::Index j = 0; j < L; ++j) xi(j) = normal(rng);
    Eigen::VectorXd l = filtered.next_mean + factor * xi;
    for (int k = 0; k < horizon; ++k) {
      const std::size_t i = z.size() + k;
      paths(p, k) = params.a_at(i).dot(l) + params.b_at(i) + params.sigma_at(i) * normal(rng);
      l = params.F_at(i) * l + params.g_at(i) * normal(rng);
    }
  }
  return paths;
}

Forecast forecast_sample_paths(const SsmParams& params, const TimeSeriesRecord& record, int horizon,
                               int num_paths, Rng& rng) {
  auto paths = ssm_sample_paths(params, record.target, horizon, num_paths, rng);
  return Forecast(SamplePaths{std::move(paths)},
                  add_steps(record.start, record.freq, static_cast<std::int64_t>(record.length())),
                  record.freq, record.item_id);
}

// Estimator -----------------------------------------------------------------

ConfigNode SsmEstimatorConfig::to_config() const {
  ConfigNode node("SsmEstimator");
  node.set("preset", preset.name())
      .set("season_length", preset.season_length)
      .set("max_iters", max_iters)
      .set("num_sample_paths", num_sample_paths)
      .set("seed", static_cast<std::int64_t>(seed));
  return node;
}

SsmEstimatorConfig SsmEstimatorConfig::from_config(const ConfigNode& node) {
  if (node.type != "SsmEstimator") throw ConfigError("expected SsmEstimator, got " + node.type);
  SsmEstimatorConfig c;
  c.preset = SsmPreset::parse(node.at("preset").as_string(), static_cast<int>(node.at("season_length").as_int()));
  c.max_iters = static_cast<int>(node.at("max_iters").as_int());
  c.num_sample_paths = static_cast<int>(node.at("num_sample_paths").as_int());
  c.seed = static_cast<std::uint64_t>(node.at("seed").as_int());
  return c;
}

std::unique_ptr<Predictor> SsmEstimator::train(const Source<TimeSeriesRecord>&) const {
  return std::make_unique<SsmPredictor>(config_);
}

Forecast SsmPredictor::predict(const TimeSeriesRecord& record, int horizon) const {
  const auto fit = fit_mle(config_.preset, record.target, config_.max_iters);
  Rng rng(record_seed(config_.seed, record));
  return forecast_sample_paths(config_.preset.expand(fit.theta), record, horizon,
                               config_.num_sample_paths, rng);
}

}  // namespace probts
