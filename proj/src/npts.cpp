#include "probts/npts.hpp"

#include <algorithm>
#include <cmath>

namespace probts {

void NptsConfig::validate() const {
  if (alpha && (std::isnan(*alpha) || *alpha < 0)) throw ConfigError("npts: alpha must be non-negative");
  if (season_length < 0) throw ConfigError("npts: season_length must be non-negative");
  if (num_sample_paths < 1) throw ConfigError("npts: num_sample_paths must be positive");
  if (context_length < 0) throw ConfigError("npts: context_length must be non-negative");
}

ConfigNode NptsConfig::to_config() const {
  ConfigNode node("NptsEstimator");
  node.set("alpha", alpha ? ConfigValue(*alpha) : ConfigValue(nullptr))
      .set("kernel", kernel == NptsKernel::uniform ? "uniform" : "exponential")
      .set("seasonal", seasonal)
      .set("season_length", season_length)
      .set("num_sample_paths", num_sample_paths)
      .set("context_length", context_length)
      .set("seed", static_cast<std::int64_t>(seed));
  return node;
}

NptsConfig NptsConfig::from_config(const ConfigNode& node) {
  if (node.type != "NptsEstimator") throw ConfigError("expected NptsEstimator, got " + node.type);
  NptsConfig c;
  if (!node.at("alpha").is_none()) c.alpha = node.at("alpha").as_double();
  const auto& kernel = node.at("kernel").as_string();
  if (kernel == "uniform") {
    c.kernel = NptsKernel::uniform;
  } else if (kernel == "exponential") {
    c.kernel = NptsKernel::exponential;
  } else {
    throw ConfigError("npts: unknown kernel '" + kernel + "'");
  }
  c.seasonal = node.at("seasonal").as_bool();
  c.season_length = static_cast<int>(node.at("season_length").as_int());
  c.num_sample_paths = static_cast<int>(node.at("num_sample_paths").as_int());
  c.context_length = static_cast<int>(node.at("context_length").as_int());
  c.seed = static_cast<std::uint64_t>(node.at("seed").as_int());
  c.validate();
  return c;
}

std::vector<double> npts_weights(int length, double alpha) {
  if (length < 1) throw ConfigError("npts_weights: length must be positive");
  if (std::isnan(alpha) || alpha < 0) throw ConfigError("npts_weights: alpha must be non-negative");
  std::vector<double> w(length, 0.0);
  if (std::isinf(alpha)) {
    w.back() = 1.0;
    return w;
  }
  // Shift the exponent so the most recent index has weight 1 before normalizing.
  double total = 0;
  for (int t = 0; t < length; ++t) {
    w[t] = std::exp(-alpha * (length - 1 - t));
    total += w[t];
  }
  for (double& x : w) x /= total;
  return w;
}

double npts_auto_alpha(int length, int recent) {
  if (length < 1 || recent < 1) throw ConfigError("npts_auto_alpha: lengths must be positive");
  if (2 * recent >= length) return 0.0;
  const auto share = [&](double alpha) {
    return std::expm1(-alpha * recent) / std::expm1(-alpha * length);
  };
  double lo = 0.0, hi = 1.0;
  while (share(hi) < 0.5) hi *= 2;
  for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (share(mid) < 0.5 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Eigen::MatrixXd npts_sample_paths(std::span<const Observation> z, const NptsConfig& config,
                                  int season_length, int horizon, Rng& rng) {
  config.validate();
  if (horizon < 1) throw ConfigError("npts: horizon must be positive");
  if (z.empty()) throw DomainError("npts: empty history");
  const int full = static_cast<int>(z.size());
  const int T = config.context_length > 0 ? std::min(config.context_length, full) : full;
  const auto history = z.subspan(full - T);

  const int step = config.seasonal ? std::max(1, season_length) : 1;
  double alpha = 0.0;
  if (config.kernel == NptsKernel::exponential) {
    alpha = config.alpha ? *config.alpha : npts_auto_alpha(T, std::max(1, season_length));
  }
  const bool naive = std::isinf(alpha);

  // Candidate offsets back from the target index: step, 2*step, ... <= T.
  std::vector<int> offsets;
  for (int d = step; d <= T; d += step) offsets.push_back(d);
  if (offsets.empty()) throw DomainError("npts: empty candidate set (season longer than history)");
  std::vector<double> cumulative(offsets.size());
  double total = 0;
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    total += naive ? 0.0 : std::exp(-alpha * (offsets[i] - step));
    cumulative[i] = total;
  }

  std::vector<double> values(T + horizon, 0.0);
  std::vector<std::uint8_t> observed(T + horizon, 0);
  for (int t = 0; t < T; ++t) {
    if (history[t]) {
      values[t] = *history[t];
      observed[t] = 1;
    }
  }

  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  auto explicit_draw = [&](int j) -> int {
    double mass = 0;
    for (std::size_t i = 0; i < offsets.size(); ++i) {
      if (observed[j - offsets[i]]) mass += cumulative[i] - (i ? cumulative[i - 1] : 0.0);
    }
    if (!(mass > 0)) {
      // Every candidate is missing or has underflowed weight: take the nearest observed one.
      for (int d : offsets) {
        if (observed[j - d]) return d;
      }
      throw DomainError("npts: empty candidate set (no observed values in the window)");
    }
    double u = uniform(rng) * mass;
    for (std::size_t i = 0; i < offsets.size(); ++i) {
      if (!observed[j - offsets[i]]) continue;
      u -= cumulative[i] - (i ? cumulative[i - 1] : 0.0);
      if (u < 0) return offsets[i];
    }
    for (std::size_t i = offsets.size(); i-- > 0;) {
      if (observed[j - offsets[i]]) return offsets[i];
    }
    return offsets.front();
  };

  Eigen::MatrixXd paths(config.num_sample_paths, horizon);
  for (int p = 0; p < config.num_sample_paths; ++p) {
    for (int k = 0; k < horizon; ++k) {
      const int j = T + k;
      int d = -1;
      if (naive) {
        for (int cand : offsets) {
          if (observed[j - cand]) {
            d = cand;
            break;
          }
        }
        if (d < 0) throw DomainError("npts: empty candidate set (no observed values in the window)");
      } else {
        // Rejection against missing indices keeps the renormalized kernel.
        for (int attempt = 0; attempt < 64 && d < 0; ++attempt) {
          const double u = uniform(rng) * total;
          auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
          if (it == cumulative.end()) --it;
          const int cand = offsets[static_cast<std::size_t>(it - cumulative.begin())];
          if (observed[j - cand]) d = cand;
        }
        if (d < 0) d = explicit_draw(j);
      }
      values[j] = values[j - d];
      observed[j] = 1;
      paths(p, k) = values[j];
    }
  }
  return paths;
}

Forecast npts_forecast(const TimeSeriesRecord& record, const NptsConfig& config, int horizon, Rng& rng) {
  const int season = config.season_length > 0 ? config.season_length : record.freq.season_length();
  auto paths = npts_sample_paths(record.target, config, season, horizon, rng);
  return Forecast(SamplePaths{std::move(paths)},
                  add_steps(record.start, record.freq, static_cast<std::int64_t>(record.length())),
                  record.freq, record.item_id);
}

Forecast NptsPredictor::predict(const TimeSeriesRecord& record, int horizon) const {
  Rng rng(record_seed(config_.seed, record));
  return npts_forecast(record, config_, horizon, rng);
}

std::unique_ptr<Predictor> NptsEstimator::train(const Source<TimeSeriesRecord>&) const {
  return std::make_unique<NptsPredictor>(config_);
}

}  // namespace probts
