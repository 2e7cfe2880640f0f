#include "probts/forecast.hpp"

#include <algorithm>
#include <cmath>

#include "probts/config.hpp"

namespace probts {

double sorted_quantile(std::span<const double> sorted, double q) {
  const std::size_t n = sorted.size();
  if (n == 0) return kNaN;
  const double pos = (static_cast<double>(n) - 1) * std::clamp(q, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, n - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

Forecast::Forecast(SamplePaths samples, Timestamp start, Frequency freq, std::string item_id)
    : repr_(std::move(samples)), start_(start), freq_(freq), item_id_(std::move(item_id)) {
  const auto& p = std::get<SamplePaths>(repr_).paths;
  if (p.rows() < 1 || p.cols() < 1) throw ConfigError("Forecast: need at least one path and one step");
  sorted_ = p;
  for (Eigen::Index c = 0; c < sorted_.cols(); ++c) {
    std::sort(sorted_.col(c).data(), sorted_.col(c).data() + sorted_.rows());
  }
}

Forecast::Forecast(QuantileGrid grid, Timestamp start, Frequency freq, std::string item_id)
    : repr_(std::move(grid)), start_(start), freq_(freq), item_id_(std::move(item_id)) {
  const auto& g = std::get<QuantileGrid>(repr_);
  if (g.levels.empty() || g.values.rows() < 1 ||
      g.values.cols() != static_cast<Eigen::Index>(g.levels.size())) {
    throw ConfigError("Forecast: quantile grid shape mismatch");
  }
  for (std::size_t i = 0; i < g.levels.size(); ++i) {
    if (!(g.levels[i] > 0 && g.levels[i] < 1) || (i > 0 && !(g.levels[i] > g.levels[i - 1]))) {
      throw ConfigError("Forecast: quantile levels must be strictly ascending in (0, 1)");
    }
  }
  for (Eigen::Index r = 0; r < g.values.rows(); ++r) {
    for (Eigen::Index c = 1; c < g.values.cols(); ++c) {
      if (g.values(r, c) < g.values(r, c - 1)) throw ConfigError("Forecast: quantile rows must be non-decreasing");
    }
  }
}

int Forecast::horizon() const {
  if (is_sample_paths()) return static_cast<int>(samples().paths.cols());
  return static_cast<int>(grid().values.rows());
}

bool Forecast::extrapolates(double q) const {
  if (is_sample_paths()) return false;
  const auto& levels = grid().levels;
  return q < levels.front() || q > levels.back();
}

std::vector<double> Forecast::quantile(double q) const {
  const int h = horizon();
  std::vector<double> out(h);
  if (is_sample_paths()) {
    for (int t = 0; t < h; ++t) {
      out[t] = sorted_quantile({sorted_.col(t).data(), static_cast<std::size_t>(sorted_.rows())}, q);
    }
    return out;
  }
  const auto& g = grid();
  const auto& levels = g.levels;
  const auto last = static_cast<Eigen::Index>(levels.size()) - 1;
  for (int t = 0; t < h; ++t) {
    if (q <= levels.front()) {
      out[t] = g.values(t, 0);
    } else if (q >= levels.back()) {
      out[t] = g.values(t, last);
    } else {
      const auto it = std::lower_bound(levels.begin(), levels.end(), q);
      const auto j = static_cast<Eigen::Index>(it - levels.begin());
      if (*it == q) {
        out[t] = g.values(t, j);
      } else {
        const double w = (q - levels[j - 1]) / (levels[j] - levels[j - 1]);
        out[t] = g.values(t, j - 1) + w * (g.values(t, j) - g.values(t, j - 1));
      }
    }
  }
  return out;
}

std::vector<double> Forecast::mean() const {
  if (!is_sample_paths()) return quantile(0.5);
  const auto& p = samples().paths;
  std::vector<double> out(p.cols());
  for (Eigen::Index t = 0; t < p.cols(); ++t) out[t] = p.col(t).mean();
  return out;
}

std::vector<double> Forecast::aggregate_sum(int begin, int end) const {
  if (!is_sample_paths()) throw ConfigError("aggregate_sum needs a sample-path forecast");
  if (begin < 0 || end > horizon() || begin >= end) {
    throw ConfigError("aggregate_sum: window [" + std::to_string(begin) + ", " + std::to_string(end) +
                      ") outside horizon " + std::to_string(horizon()));
  }
  const auto& p = samples().paths;
  std::vector<double> out(p.rows());
  for (Eigen::Index i = 0; i < p.rows(); ++i) out[i] = p.row(i).segment(begin, end - begin).sum();
  return out;
}

namespace {

std::string level_column(double level) {
  const double pct = level * 100;
  if (std::abs(pct - std::round(pct)) < 1e-9) return "q" + std::to_string(static_cast<int>(std::round(pct)));
  return "q" + format_double(pct);
}

}  // namespace

void write_plot_data(std::ostream& out, const Forecast& forecast, const TimeSeriesRecord* history,
                     int history_steps, std::span<const double> levels, std::span<const Observation> truth) {
  out << "time,observed";
  for (double l : levels) out << ',' << level_column(l);
  out << ",mean\n";
  if (history && history_steps > 0) {
    const auto n = static_cast<int>(history->length());
    for (int t = std::max(0, n - history_steps); t < n; ++t) {
      out << add_steps(history->start, history->freq, t).to_string() << ',';
      if (history->target[t]) out << format_double(*history->target[t]);
      for (std::size_t i = 0; i < levels.size(); ++i) out << ',';
      out << ",\n";
    }
  }
  std::vector<std::vector<double>> q;
  for (double l : levels) q.push_back(forecast.quantile(l));
  const auto mean = forecast.mean();
  for (int t = 0; t < forecast.horizon(); ++t) {
    out << forecast.time_at(t).to_string() << ',';
    if (t < static_cast<int>(truth.size()) && truth[t]) out << format_double(*truth[t]);
    for (const auto& col : q) out << ',' << format_double(col[t]);
    out << ',' << format_double(mean[t]) << '\n';
  }
}

double pinball_loss(double target, double prediction, double q) {
  return target >= prediction ? (target - prediction) * q : (prediction - target) * (1 - q);
}

}  // namespace probts
