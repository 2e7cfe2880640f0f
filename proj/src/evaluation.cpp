#include "probts/evaluation.hpp"

#include <cmath>
#include <memory>
#include <sstream>

namespace probts {

// Splitting -----------------------------------------------------------------

void SplitSpec::validate() const {
  if (prediction_length < 1) throw ConfigError("split: prediction_length must be positive");
  if (num_rolling_windows < 1) throw ConfigError("split: num_rolling_windows must be positive");
  if (stride < 0) throw ConfigError("split: stride must be non-negative");
}

ConfigNode SplitSpec::to_config() const {
  ConfigNode node("SplitSpec");
  node.set("prediction_length", prediction_length)
      .set("num_rolling_windows", num_rolling_windows)
      .set("stride", effective_stride());
  return node;
}

SplitSpec SplitSpec::from_config(const ConfigNode& node) {
  if (node.type != "SplitSpec") throw ConfigError("expected SplitSpec, got " + node.type);
  SplitSpec s;
  s.prediction_length = static_cast<int>(node.at("prediction_length").as_int());
  s.num_rolling_windows = static_cast<int>(node.at("num_rolling_windows").as_int());
  s.stride = static_cast<int>(node.at("stride").as_int());
  s.validate();
  return s;
}

WindowSplitter::WindowSplitter(SplitSpec spec) : spec_(spec) { spec_.validate(); }

int WindowSplitter::num_windows(std::size_t length) const {
  const auto T = static_cast<std::int64_t>(length);
  const std::int64_t room = T - spec_.prediction_length - 1;
  if (room < 0) return 0;
  return static_cast<int>(std::min<std::int64_t>(spec_.num_rolling_windows, room / spec_.effective_stride() + 1));
}

namespace {

TimeSeriesRecord truncated(const TimeSeriesRecord& record, std::size_t length) {
  TimeSeriesRecord out;
  out.item_id = record.item_id;
  out.start = record.start;
  out.freq = record.freq;
  out.feat_static_cat = record.feat_static_cat;
  out.target.assign(record.target.begin(), record.target.begin() + static_cast<std::ptrdiff_t>(length));
  for (const auto& f : record.feat_dynamic_real) {
    out.feat_dynamic_real.emplace_back(f.begin(), f.begin() + static_cast<std::ptrdiff_t>(length));
  }
  return out;
}

}  // namespace

std::vector<BacktestWindow> WindowSplitter::split(const TimeSeriesRecord& record) {
  const int n = num_windows(record.length());
  std::vector<BacktestWindow> out;
  if (n == 0) {
    ++skipped_;
    log::info("split: series '" + record.item_id + "' too short for one window, skipped");
    return out;
  }
  const std::size_t T = record.length();
  const auto P = static_cast<std::size_t>(spec_.prediction_length);
  for (int k = n - 1; k >= 0; --k) {
    const std::size_t cut = T - static_cast<std::size_t>(k) * static_cast<std::size_t>(spec_.effective_stride());
    BacktestWindow w;
    w.history = truncated(record, cut - P);
    w.truth.assign(record.target.begin() + static_cast<std::ptrdiff_t>(cut - P),
                   record.target.begin() + static_cast<std::ptrdiff_t>(cut));
    w.window = k;
    out.push_back(std::move(w));
  }
  return out;
}

Stream<BacktestWindow> WindowSplitter::apply(Stream<TimeSeriesRecord> records) {
  auto source = std::make_shared<Stream<TimeSeriesRecord>>(std::move(records));
  auto pending = std::make_shared<std::vector<BacktestWindow>>();
  auto pos = std::make_shared<std::size_t>(0);
  return Stream<BacktestWindow>([this, source, pending, pos]() -> std::optional<BacktestWindow> {
    while (*pos >= pending->size()) {
      auto record = source->next();
      if (!record) return std::nullopt;
      *pending = split(*record);
      *pos = 0;
    }
    return std::move((*pending)[(*pos)++]);
  });
}

std::optional<TimeSeriesRecord> WindowSplitter::training_view(const TimeSeriesRecord& record) const {
  const int n = num_windows(record.length());
  if (n == 0) return std::nullopt;
  const std::size_t oldest_cut =
      record.length() - static_cast<std::size_t>(n - 1) * static_cast<std::size_t>(spec_.effective_stride());
  return truncated(record, oldest_cut - static_cast<std::size_t>(spec_.prediction_length));
}

// Metrics -------------------------------------------------------------------

double seasonal_naive_scale(std::span<const Observation> history, int season_length) {
  std::size_t m = static_cast<std::size_t>(std::max(1, season_length));
  if (history.size() <= m) m = 1;
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t t = m; t < history.size(); ++t) {
    if (history[t] && history[t - m]) {
      sum += std::abs(*history[t] - *history[t - m]);
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : kNaN;
}

MetricRow evaluate_window(const BacktestWindow& window, const Forecast& forecast, std::span<const double> levels,
                          int season_length) {
  const auto& item = window.history.item_id;
  if (forecast.horizon() != static_cast<int>(window.truth.size())) {
    throw ConfigError("evaluate: item '" + item + "' has " + std::to_string(window.truth.size()) +
                      " truth steps but a forecast horizon of " + std::to_string(forecast.horizon()));
  }
  MetricRow row;
  row.item_id = item;
  row.window = window.window;
  row.forecast_start = forecast.start();
  row.quantile_loss.assign(levels.size(), 0.0);

  std::vector<std::vector<double>> q(levels.size());
  for (std::size_t j = 0; j < levels.size(); ++j) q[j] = forecast.quantile(levels[j]);
  const auto median = forecast.quantile(0.5);

  double mape_sum = 0, smape_sum = 0, crps_sum = 0;
  int mape_n = 0, smape_n = 0;
  for (std::size_t t = 0; t < window.truth.size(); ++t) {
    if (!window.truth[t]) continue;
    const double z = *window.truth[t];
    const double err = std::abs(z - median[t]);
    ++row.num_steps;
    row.abs_target_sum += std::abs(z);
    row.abs_error += err;
    if (z != 0) {
      mape_sum += err / std::abs(z);
      ++mape_n;
    } else {
      ++row.mape_skipped;
    }
    const double denom = std::abs(z) + std::abs(median[t]);
    if (denom != 0) {
      smape_sum += 2 * err / denom;
      ++smape_n;
    } else {
      ++row.smape_skipped;
    }
    double step_crps = 0;
    for (std::size_t j = 0; j < levels.size(); ++j) {
      const double loss = pinball_loss(z, q[j][t], levels[j]);
      row.quantile_loss[j] += loss;
      step_crps += 2 * loss;
    }
    if (!levels.empty()) crps_sum += step_crps / static_cast<double>(levels.size());
  }

  std::vector<std::string> notes;
  if (row.num_steps == 0) notes.emplace_back("no observed truth");
  for (double level : levels) {
    if (forecast.extrapolates(level)) {
      notes.emplace_back("levels outside the quantile grid were clamped");
      break;
    }
  }
  if (mape_n) {
    row.mape = mape_sum / mape_n;
  } else if (row.num_steps) {
    notes.emplace_back("MAPE: all targets zero");
  }
  if (smape_n) {
    row.smape = smape_sum / smape_n;
  } else if (row.num_steps) {
    notes.emplace_back("sMAPE: all denominators zero");
  }
  if (row.num_steps) {
    row.crps = crps_sum / row.num_steps;
    const int m = season_length > 0 ? season_length : window.history.freq.season_length();
    const double scale = seasonal_naive_scale(window.history.target, m);
    if (std::isnan(scale)) {
      notes.emplace_back("MASE: history too short");
    } else if (scale == 0) {
      notes.emplace_back("MASE: zero seasonal-naive error");
    } else {
      row.mase = (row.abs_error / row.num_steps) / scale;
    }
  }
  for (std::size_t i = 0; i < notes.size(); ++i) row.note += (i ? "; " : "") + notes[i];
  return row;
}

MetricAccumulator::MetricAccumulator(std::vector<double> levels)
    : levels_(std::move(levels)), pinball_(levels_.size(), 0.0) {}

void MetricAccumulator::add(const MetricRow& row) {
  if (row.quantile_loss.size() != levels_.size()) throw ConfigError("aggregate: quantile level count mismatch");
  ++items_;
  abs_target_ += row.abs_target_sum;
  abs_error_ += row.abs_error;
  for (std::size_t j = 0; j < levels_.size(); ++j) pinball_[j] += row.quantile_loss[j];
  mase_.add(row.mase);
  mape_.add(row.mape);
  smape_.add(row.smape);
  crps_.add(row.crps);
}

void MetricAccumulator::merge(const MetricAccumulator& other) {
  if (other.levels_ != levels_) throw ConfigError("aggregate: cannot merge different quantile levels");
  items_ += other.items_;
  abs_target_ += other.abs_target_;
  abs_error_ += other.abs_error_;
  for (std::size_t j = 0; j < levels_.size(); ++j) pinball_[j] += other.pinball_[j];
  for (auto [a, b] : {std::pair{&mase_, &other.mase_}, {&mape_, &other.mape_}, {&smape_, &other.smape_},
                      {&crps_, &other.crps_}}) {
    a->sum += b->sum;
    a->count += b->count;
  }
}

AggregateReport MetricAccumulator::report() const {
  AggregateReport r;
  r.levels = levels_;
  r.item_count = items_;
  r.abs_target_sum = abs_target_;
  r.abs_error = abs_error_;
  if (abs_target_ > 0) {
    r.wmape = abs_error_ / abs_target_;
    double total = 0;
    for (double p : pinball_) {
      r.weighted_quantile_loss.push_back(2 * p / abs_target_);
      total += r.weighted_quantile_loss.back();
    }
    if (!levels_.empty()) r.crps = total / static_cast<double>(levels_.size());
  } else {
    r.weighted_quantile_loss.assign(levels_.size(), kNaN);
  }
  r.mean_mase = mase_.value();
  r.mean_mape = mape_.value();
  r.mean_smape = smape_.value();
  r.mean_item_crps = crps_.value();
  return r;
}

namespace {

std::string level_name(double q) { return format_double(q); }

std::string num(double x) {
  if (std::isnan(x)) return "nan";
  return format_double(x);
}

nlohmann::ordered_json json_num(double x) {
  if (std::isnan(x)) return nullptr;
  return x;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string AggregateReport::to_key_value() const {
  std::ostringstream out;
  out << "item_count=" << item_count << "\n";
  out << "wMAPE=" << num(wmape) << "\n";
  out << "CRPS=" << num(crps) << "\n";
  for (std::size_t j = 0; j < levels.size(); ++j) {
    out << "wQL[" << level_name(levels[j]) << "]=" << num(weighted_quantile_loss[j]) << "\n";
  }
  out << "mean_MASE=" << num(mean_mase) << "\n";
  out << "mean_MAPE=" << num(mean_mape) << "\n";
  out << "mean_sMAPE=" << num(mean_smape) << "\n";
  out << "mean_item_CRPS=" << num(mean_item_crps) << "\n";
  out << "abs_target_sum=" << num(abs_target_sum) << "\n";
  out << "abs_error=" << num(abs_error) << "\n";
  return out.str();
}

nlohmann::ordered_json AggregateReport::to_json() const {
  nlohmann::ordered_json j;
  j["item_count"] = item_count;
  j["wMAPE"] = json_num(wmape);
  j["CRPS"] = json_num(crps);
  auto& wql = j["wQL"] = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < levels.size(); ++i) wql[level_name(levels[i])] = json_num(weighted_quantile_loss[i]);
  j["mean_MASE"] = json_num(mean_mase);
  j["mean_MAPE"] = json_num(mean_mape);
  j["mean_sMAPE"] = json_num(mean_smape);
  j["mean_item_CRPS"] = json_num(mean_item_crps);
  j["abs_target_sum"] = json_num(abs_target_sum);
  j["abs_error"] = json_num(abs_error);
  return j;
}

void write_metrics_header(std::ostream& out, std::span<const double> levels) {
  out << "item_id,window,forecast_start,num_steps,MASE,MAPE,sMAPE";
  for (double q : levels) out << ",QL[" << level_name(q) << "]";
  out << ",CRPS,abs_target_sum,abs_error,note\n";
}

void write_metrics_row(std::ostream& out, const MetricRow& row) {
  out << csv_escape(row.item_id) << ',' << row.window << ',' << row.forecast_start.to_string() << ','
      << row.num_steps << ',' << num(row.mase) << ',' << num(row.mape) << ',' << num(row.smape);
  for (double l : row.quantile_loss) out << ',' << num(l);
  out << ',' << num(row.crps) << ',' << num(row.abs_target_sum) << ',' << num(row.abs_error) << ','
      << csv_escape(row.note) << '\n';
}

// Backtest ------------------------------------------------------------------

namespace {

template <typename F>
auto staged(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const DatasetError& e) {
    throw DatasetError(std::string(stage) + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(stage) + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(std::string(stage) + ": " + e.what());
  } catch (const DomainError& e) {
    throw DomainError(std::string(stage) + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error(std::string(stage) + ": " + e.what());
  }
}

}  // namespace

AggregateReport backtest(const Predictor& predictor, const Source<TimeSeriesRecord>& test,
                         const BacktestOptions& options, const MetricSink& sink) {
  WindowSplitter splitter(options.split);
  MetricAccumulator acc(options.quantiles);
  auto windows = staged("split", [&] { return splitter.apply(test()); });
  while (true) {
    auto w = staged("split", [&] { return windows.next(); });
    if (!w) break;
    const auto forecast = staged("predict", [&] { return predictor.predict(w->history, options.split.prediction_length); });
    const auto row = staged("evaluate", [&] { return evaluate_window(*w, forecast, options.quantiles, options.season_length); });
    acc.add(row);
    if (sink) sink(row);
  }
  if (splitter.skipped_series() > 0) {
    log::warn("backtest: skipped " + std::to_string(splitter.skipped_series()) + " series too short to evaluate");
  }
  return acc.report();
}

AggregateReport backtest(const Estimator& estimator, const Source<TimeSeriesRecord>& train,
                         const Source<TimeSeriesRecord>& test, const BacktestOptions& options,
                         const MetricSink& sink) {
  const auto guard = std::make_shared<WindowSplitter>(options.split);
  Source<TimeSeriesRecord> train_views = [train, guard]() {
    auto source = std::make_shared<Stream<TimeSeriesRecord>>(train());
    return Stream<TimeSeriesRecord>([source, guard]() -> std::optional<TimeSeriesRecord> {
      while (auto record = source->next()) {
        if (auto view = guard->training_view(*record)) return view;
      }
      return std::nullopt;
    });
  };
  const auto predictor = staged("train", [&] { return estimator.train(train_views); });
  return backtest(*predictor, test, options, sink);
}

}  // namespace probts
