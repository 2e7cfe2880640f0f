#include "probts/anomaly.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "probts/distributions.hpp"

namespace probts {

double two_sided_pvalue(double cdf_value) {
  const double F = std::clamp(cdf_value, 0.0, 1.0);
  return std::min(1.0, 2 * std::min(F, 1 - F));
}

EmpiricalCdf::EmpiricalCdf(std::vector<double> samples) : sorted_(std::move(samples)) {
  if (sorted_.empty()) throw DomainError("empirical CDF needs at least one sample");
  std::sort(sorted_.begin(), sorted_.end());
}

double EmpiricalCdf::operator()(double z) const {
  const auto lo = std::lower_bound(sorted_.begin(), sorted_.end(), z);
  const auto hi = std::upper_bound(lo, sorted_.end(), z);
  const double below = static_cast<double>(lo - sorted_.begin());
  const double ties = static_cast<double>(hi - lo);
  return (below + 0.5 * ties) / static_cast<double>(sorted_.size());
}

// Configuration -------------------------------------------------------------

void AnomalyConfig::validate() const {
  if (!(threshold > 0 && threshold < 1)) throw ConfigError("anomaly: threshold must lie in (0, 1)");
  if (levels.empty()) throw ConfigError("anomaly: need at least one NLL level");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (!(levels[i] > 0 && levels[i] < 1)) throw ConfigError("anomaly: levels must lie in (0, 1)");
    if (i > 0 && !(levels[i] > levels[i - 1])) throw ConfigError("anomaly: levels must be ascending");
  }
  if (method == Method::nll_percentile &&
      std::find(levels.begin(), levels.end(), flag_level) == levels.end()) {
    throw ConfigError("anomaly: flag_level must be one of the calibrated levels");
  }
}

ConfigNode AnomalyConfig::to_config() const {
  ConfigNode node("AnomalyConfig");
  node.set("method", method == Method::cdf_pvalue ? "cdf_pvalue" : "nll_percentile")
      .set("threshold", threshold)
      .set("levels", ConfigValue::list_of(levels))
      .set("flag_level", flag_level);
  return node;
}

AnomalyConfig AnomalyConfig::from_config(const ConfigNode& node) {
  if (node.type != "AnomalyConfig") throw ConfigError("expected AnomalyConfig, got " + node.type);
  AnomalyConfig c;
  const auto& m = node.at("method").as_string();
  if (m == "cdf_pvalue") {
    c.method = Method::cdf_pvalue;
  } else if (m == "nll_percentile") {
    c.method = Method::nll_percentile;
  } else {
    throw ConfigError("anomaly: unknown method '" + m + "'");
  }
  c.threshold = node.at("threshold").as_double();
  c.levels = node.at("levels").as_double_list();
  c.flag_level = node.at("flag_level").as_double();
  c.validate();
  return c;
}

// Reports -------------------------------------------------------------------

std::size_t AnomalyReport::num_flagged() const {
  return static_cast<std::size_t>(std::count_if(steps.begin(), steps.end(), [](const auto& s) { return s.flagged; }));
}

std::size_t AnomalyReport::num_scored() const {
  return static_cast<std::size_t>(
      std::count_if(steps.begin(), steps.end(), [](const auto& s) { return !std::isnan(s.score); }));
}

AnomalyReport detect_cdf(std::span<const Cdf> cdfs, std::span<const Observation> observations, double threshold,
                         Timestamp start, Frequency freq, std::string item_id) {
  if (cdfs.size() != observations.size()) {
    throw ConfigError("detect_cdf: " + std::to_string(cdfs.size()) + " CDFs for " +
                      std::to_string(observations.size()) + " observations");
  }
  AnomalyReport report{std::move(item_id), "p_value", {}};
  report.steps.reserve(observations.size());
  for (std::size_t t = 0; t < observations.size(); ++t) {
    AnomalyStep step;
    step.time = add_steps(start, freq, static_cast<std::int64_t>(t));
    step.value = observations[t];
    step.threshold = threshold;
    if (observations[t] && cdfs[t]) {
      step.score = two_sided_pvalue(cdfs[t](*observations[t]));
      step.flagged = step.score < threshold;
    }
    report.steps.push_back(step);
  }
  return report;
}

double NllThresholds::at(double level) const {
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (levels[i] == level) return values[i];
  }
  throw ConfigError("no NLL threshold calibrated at level " + format_double(level));
}

namespace {

/// Smallest sample value x with F_n(x) >= q.
double inverse_empirical_cdf(const std::vector<double>& sorted, double q) {
  const double n = static_cast<double>(sorted.size());
  auto k = static_cast<std::size_t>(std::ceil(q * n - 1e-9 * n));
  k = std::clamp<std::size_t>(k, 1, sorted.size());
  return sorted[k - 1];
}

}  // namespace

NllThresholds calibrate_nll(const StepNll& model, Stream<TimeSeriesRecord> records, std::span<const double> levels) {
  if (levels.empty()) throw ConfigError("calibrate_nll: no levels given");
  for (double q : levels) {
    if (!(q > 0 && q < 1)) throw ConfigError("calibrate_nll: levels must lie in (0, 1)");
  }
  std::vector<double> pooled;
  while (auto record = records.next()) {
    for (double x : model(*record)) {
      if (!std::isnan(x)) pooled.push_back(x);
    }
  }
  if (pooled.empty()) throw DomainError("calibrate_nll: no observed steps");
  std::sort(pooled.begin(), pooled.end());
  NllThresholds out;
  out.num_points = pooled.size();
  const double top = *std::max_element(levels.begin(), levels.end());
  if (static_cast<double>(pooled.size()) < 1.0 / (1.0 - top)) {
    log::warn("calibrate_nll: " + std::to_string(pooled.size()) + " points are too few for level " +
              format_double(top) + "; threshold is unstable");
  }
  for (double q : levels) {
    out.levels.push_back(q);
    out.values.push_back(inverse_empirical_cdf(pooled, q));
  }
  return out;
}

AnomalyReport detect_nll(const StepNll& model, const TimeSeriesRecord& record, const NllThresholds& thresholds,
                         double level) {
  if (thresholds.levels.empty()) throw ConfigError("detect_nll: empty thresholds");
  const double threshold = thresholds.at(level);
  const auto nll = model(record);
  if (nll.size() != record.length()) throw ConfigError("detect_nll: model returned the wrong number of scores");
  AnomalyReport report{record.item_id, "nll", {}};
  report.steps.reserve(nll.size());
  for (std::size_t t = 0; t < nll.size(); ++t) {
    AnomalyStep step;
    step.time = add_steps(record.start, record.freq, static_cast<std::int64_t>(t));
    step.value = record.target[t];
    step.score = nll[t];
    step.threshold = threshold;
    step.flagged = !std::isnan(nll[t]) && nll[t] > threshold;
    report.steps.push_back(step);
  }
  return report;
}

// Model adapters ------------------------------------------------------------

std::vector<double> ssm_step_nll(const SsmParams& params, std::span<const Observation> z) {
  const auto result = kalman_filter(params, z);
  std::vector<double> out;
  out.reserve(z.size());
  for (const auto& step : result.steps) out.push_back(step.observed ? -step.loglik : kNaN);
  return out;
}

std::vector<Cdf> ssm_predictive_cdfs(const SsmParams& params, std::span<const Observation> z) {
  const auto result = kalman_filter(params, z);
  std::vector<Cdf> out;
  out.reserve(z.size());
  for (const auto& step : result.steps) {
    const double mean = step.obs_mean;
    const double sd = std::sqrt(step.obs_var);
    out.emplace_back([mean, sd](double x) { return normal_cdf((x - mean) / sd); });
  }
  return out;
}

SsmScorer::SsmScorer(SsmPreset preset, std::optional<SsmTheta> theta, int max_iters)
    : preset_(preset), theta_(std::move(theta)), max_iters_(max_iters) {}

SsmParams SsmScorer::params_for(const TimeSeriesRecord& record) const {
  if (theta_) return preset_.expand(*theta_);
  return preset_.expand(fit_mle(preset_, record.target, max_iters_).theta);
}

std::vector<double> SsmScorer::nll(const TimeSeriesRecord& record) const {
  return ssm_step_nll(params_for(record), record.target);
}

std::vector<Cdf> SsmScorer::cdfs(const TimeSeriesRecord& record) const {
  return ssm_predictive_cdfs(params_for(record), record.target);
}

StepNll SsmScorer::as_step_nll() const {
  auto self = std::make_shared<SsmScorer>(*this);
  return [self](const TimeSeriesRecord& r) { return self->nll(r); };
}

std::vector<Cdf> npts_rolling_cdfs(const TimeSeriesRecord& record, const NptsConfig& config, int min_history,
                                   Rng& rng) {
  const int season = config.season_length > 0 ? config.season_length : record.freq.season_length();
  std::vector<Cdf> out(record.length());
  const std::span<const Observation> z(record.target);
  for (std::size_t t = static_cast<std::size_t>(std::max(1, min_history)); t < z.size(); ++t) {
    const auto history = z.first(t);
    if (std::none_of(history.begin(), history.end(), [](const Observation& o) { return o.has_value(); })) continue;
    const Eigen::MatrixXd paths = npts_sample_paths(history, config, season, 1, rng);
    auto cdf = std::make_shared<EmpiricalCdf>(std::vector<double>(paths.data(), paths.data() + paths.size()));
    out[t] = [cdf](double x) { return (*cdf)(x); };
  }
  return out;
}

void write_anomaly_header(std::ostream& out) { out << "item_id,time,value,score,flagged,threshold\n"; }

void write_anomaly_rows(std::ostream& out, const AnomalyReport& report) {
  for (const auto& s : report.steps) {
    out << report.item_id << ',' << s.time.to_string() << ',' << (s.value ? format_double(*s.value) : "")
        << ',' << (std::isnan(s.score) ? "nan" : format_double(s.score)) << ',' << (s.flagged ? 1 : 0) << ','
        << format_double(s.threshold) << '\n';
  }
}

}  // namespace probts
