#include "probts/transform.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace probts {

// Instance splitting --------------------------------------------------------

InstanceSplitter::InstanceSplitter(int context_length, int prediction_length, SplitMode mode,
                                   std::uint64_t seed)
    : context_(context_length), prediction_(prediction_length), mode_(mode), rng_(seed) {
  if (context_ < 1) throw ConfigError("InstanceSplitter: context_length must be positive");
  if (prediction_ < 1) throw ConfigError("InstanceSplitter: prediction_length must be positive");
  if (const auto* train = std::get_if<TrainSampling>(&mode_);
      train && !(train->expected_instances_per_series > 0)) {
    throw ConfigError("InstanceSplitter: expected instances per series must be positive");
  }
}

TrainingInstance InstanceSplitter::make_instance(const TimeSeriesRecord& record,
                                                 std::int64_t split_point,
                                                 bool with_future) const {
  const auto dims = static_cast<Eigen::Index>(record.feat_dynamic_real.size());
  TrainingInstance inst;
  inst.item_id = record.item_id;
  inst.forecast_start = add_steps(record.start, record.freq, split_point);
  inst.past_target.assign(context_, 0.0);
  inst.past_is_pad.assign(context_, 0);
  inst.past_observed.assign(context_, 0);
  inst.past_feat = Eigen::MatrixXd::Zero(context_, dims);
  inst.future_feat = Eigen::MatrixXd::Zero(prediction_, dims);

  for (int i = 0; i < context_; ++i) {
    const std::int64_t idx = split_point - context_ + i;
    if (idx < 0) {
      inst.past_is_pad[i] = 1;
      continue;
    }
    if (const auto& v = record.target[idx]) {
      inst.past_target[i] = *v;
      inst.past_observed[i] = 1;
    }
    for (Eigen::Index d = 0; d < dims; ++d) inst.past_feat(i, d) = record.feat_dynamic_real[d][idx];
  }
  for (int k = 0; k < prediction_; ++k) {
    const std::int64_t idx = split_point + k;
    for (Eigen::Index d = 0; d < dims; ++d) {
      const auto& feat = record.feat_dynamic_real[d];
      if (idx < static_cast<std::int64_t>(feat.size())) inst.future_feat(k, d) = feat[idx];
    }
  }
  if (with_future) {
    inst.future_target.reserve(prediction_);
    for (int k = 0; k < prediction_; ++k) inst.future_target.push_back(*record.target[split_point + k]);
  }
  return inst;
}

std::vector<TrainingInstance> InstanceSplitter::split(const TimeSeriesRecord& record) {
  const auto length = static_cast<std::int64_t>(record.length());
  std::vector<TrainingInstance> out;
  if (std::holds_alternative<TestSampling>(mode_)) {
    out.push_back(make_instance(record, length, false));
    return out;
  }

  // Valid split points s in [1, T - P] whose future window is fully observed.
  std::vector<std::int64_t> valid;
  for (std::int64_t s = 1; s + prediction_ <= length; ++s) {
    bool observed = true;
    for (int k = 0; k < prediction_ && observed; ++k) observed = record.target[s + k].has_value();
    if (observed) valid.push_back(s);
  }
  if (valid.empty()) {
    ++skipped_;
    return out;
  }
  const double expected = std::get<TrainSampling>(mode_).expected_instances_per_series;
  const double p = std::min(1.0, expected / static_cast<double>(valid.size()));
  std::bernoulli_distribution keep(p);
  for (auto s : valid) {
    if (keep(rng_)) out.push_back(make_instance(record, s, true));
  }
  return out;
}

Stream<TrainingInstance> InstanceSplitter::apply(Stream<TimeSeriesRecord> records) {
  struct State {
    Stream<TimeSeriesRecord> records;
    std::vector<TrainingInstance> pending;
    std::size_t pos = 0;
  };
  auto state = std::make_shared<State>(State{std::move(records), {}, 0});
  return Stream<TrainingInstance>([this, state]() -> std::optional<TrainingInstance> {
    while (state->pos >= state->pending.size()) {
      auto rec = state->records.next();
      if (!rec) return std::nullopt;
      state->pending = split(*rec);
      state->pos = 0;
    }
    return std::move(state->pending[state->pos++]);
  });
}

// Record transformations ----------------------------------------------------

namespace {

std::size_t feature_horizon(const TimeSeriesRecord& record, std::size_t minimum) {
  std::size_t n = std::max(minimum, record.length());
  for (const auto& f : record.feat_dynamic_real) n = std::max(n, f.size());
  return n;
}

}  // namespace

TimeSeriesRecord mark_missing(TimeSeriesRecord record) {
  std::vector<double> indicator(feature_horizon(record, 0), 0.0);
  double last = 0.0;
  for (std::size_t t = 0; t < record.target.size(); ++t) {
    if (record.target[t]) {
      last = *record.target[t];
      indicator[t] = 1.0;
    } else {
      record.target[t] = last;
    }
  }
  record.feat_dynamic_real.push_back(std::move(indicator));
  return record;
}

int num_time_features(Frequency freq) {
  switch (freq.unit) {
    case TimeUnit::minute:
    case TimeUnit::hour:
    case TimeUnit::day: return 2;
    case TimeUnit::week:
    case TimeUnit::month:
    case TimeUnit::quarter: return 1;
    case TimeUnit::year: return 0;
  }
  return 0;
}

TimeSeriesRecord add_time_features(TimeSeriesRecord record, int extra_steps) {
  const std::size_t n = feature_horizon(record, record.length() + std::max(0, extra_steps));
  const int k = num_time_features(record.freq);
  std::vector<std::vector<double>> feats(k, std::vector<double>(n));
  auto scaled = [](int value, int cardinality) {
    return static_cast<double>(value) / (cardinality - 1) - 0.5;
  };
  for (std::size_t t = 0; t < n; ++t) {
    const auto f = calendar(add_steps(record.start, record.freq, static_cast<std::int64_t>(t)));
    switch (record.freq.unit) {
      case TimeUnit::minute:
        feats[0][t] = scaled(f.minute, 60);
        feats[1][t] = scaled(f.hour, 24);
        break;
      case TimeUnit::hour:
        feats[0][t] = scaled(f.hour, 24);
        feats[1][t] = scaled(f.weekday, 7);
        break;
      case TimeUnit::day:
        feats[0][t] = scaled(f.weekday, 7);
        feats[1][t] = scaled(f.day - 1, 31);
        break;
      case TimeUnit::week:
        feats[0][t] = scaled(std::min(f.day_of_year / 7, 51), 52);
        break;
      case TimeUnit::month:
        feats[0][t] = scaled(f.month - 1, 12);
        break;
      case TimeUnit::quarter:
        feats[0][t] = scaled((f.month - 1) / 3, 4);
        break;
      case TimeUnit::year:
        break;
    }
  }
  for (auto& f : feats) record.feat_dynamic_real.push_back(std::move(f));
  return record;
}

// Box-Cox -------------------------------------------------------------------

double boxcox_forward(double z, double lambda) {
  if (lambda <= 0 ? !(z > 0) : !(z >= 0)) {
    throw DomainError("boxcox_forward: value " + format_double(z) + " outside domain for lambda " +
                      format_double(lambda));
  }
  if (lambda == 0) return std::log(z);
  return std::expm1(lambda * std::log(z)) / lambda;
}

double boxcox_inverse(double y, double lambda) {
  if (lambda == 0) return std::exp(y);
  const double base = lambda * y;
  if (!(base > -1)) {
    throw DomainError("boxcox_inverse: value " + format_double(y) + " outside image for lambda " +
                      format_double(lambda));
  }
  return std::exp(std::log1p(base) / lambda);
}

std::vector<double> boxcox_forward(std::span<const double> values, double lambda) {
  std::vector<double> out;
  out.reserve(values.size());
  for (double z : values) out.push_back(boxcox_forward(z, lambda));
  return out;
}

std::vector<double> boxcox_inverse(std::span<const double> values, double lambda) {
  std::vector<double> out;
  out.reserve(values.size());
  for (double y : values) out.push_back(boxcox_inverse(y, lambda));
  return out;
}

// Pipeline ------------------------------------------------------------------

Pipeline Pipeline::then(const Pipeline& other) const {
  auto steps = steps_;
  steps.insert(steps.end(), other.steps_.begin(), other.steps_.end());
  return Pipeline(std::move(steps));
}

Pipeline Pipeline::then(TransformStep step) const {
  auto steps = steps_;
  steps.push_back(step);
  return Pipeline(std::move(steps));
}

TimeSeriesRecord Pipeline::apply(TimeSeriesRecord record) const {
  for (const auto& step : steps_) {
    if (std::holds_alternative<MarkMissingStep>(step)) {
      record = mark_missing(std::move(record));
    } else if (const auto* tf = std::get_if<TimeFeatureStep>(&step)) {
      record = add_time_features(std::move(record), tf->extra_steps);
    } else if (const auto* bc = std::get_if<BoxCoxStep>(&step)) {
      for (auto& v : record.target) {
        if (v) v = boxcox_forward(*v, bc->lambda);
      }
    }
  }
  return record;
}

Stream<TimeSeriesRecord> Pipeline::apply(Stream<TimeSeriesRecord> records) const {
  if (steps_.empty()) return records;
  return std::move(records).map([self = *this](TimeSeriesRecord r) { return self.apply(std::move(r)); });
}

ConfigNode Pipeline::to_config() const {
  ConfigValue::List steps;
  for (const auto& step : steps_) {
    if (std::holds_alternative<MarkMissingStep>(step)) {
      steps.emplace_back(ConfigNode("MarkMissing"));
    } else if (const auto* tf = std::get_if<TimeFeatureStep>(&step)) {
      steps.emplace_back(ConfigNode("AddTimeFeatures").set("extra_steps", tf->extra_steps));
    } else if (const auto* bc = std::get_if<BoxCoxStep>(&step)) {
      steps.emplace_back(ConfigNode("BoxCox").set("lambda", bc->lambda));
    }
  }
  return ConfigNode("Pipeline").set("steps", ConfigValue(std::move(steps)));
}

Pipeline Pipeline::from_config(const ConfigNode& node) {
  if (node.type != "Pipeline") throw ConfigError("expected Pipeline, got " + node.type);
  std::vector<TransformStep> steps;
  for (const auto& v : node.at("steps").as_list()) {
    const auto& s = v.as_node();
    if (s.type == "MarkMissing") {
      steps.emplace_back(MarkMissingStep{});
    } else if (s.type == "AddTimeFeatures") {
      steps.emplace_back(TimeFeatureStep{static_cast<int>(s.at("extra_steps").as_int())});
    } else if (s.type == "BoxCox") {
      steps.emplace_back(BoxCoxStep{s.at("lambda").as_double()});
    } else {
      throw ConfigError("unregistered component type '" + s.type + "'");
    }
  }
  return Pipeline(std::move(steps));
}

}  // namespace probts
