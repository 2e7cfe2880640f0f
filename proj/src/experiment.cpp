#include "probts/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "probts/anomaly.hpp"
#include "probts/neuralqr.hpp"
#include "probts/npts.hpp"
#include "probts/ssm.hpp"

namespace probts {

ConfigNode ExperimentConfig::to_config() const {
  ConfigNode node("Experiment");
  node.set("command", command)
      .set("seed", static_cast<std::int64_t>(seed))
      .set("data", data)
      .set("freq", freq)
      .set("estimator", estimator)
      .set("split", split.to_config())
      .set("quantiles", ConfigValue::list_of(quantiles))
      .set("season_length", season_length);
  return node;
}

ExperimentConfig ExperimentConfig::from_config(const ConfigNode& node) {
  if (node.type != "Experiment") throw ConfigError("expected Experiment, got " + node.type);
  check_registered(node);
  ExperimentConfig c;
  c.command = node.at("command").as_string();
  c.seed = static_cast<std::uint64_t>(node.at("seed").as_int());
  c.data = node.at("data").as_string();
  c.freq = node.at("freq").as_string();
  c.estimator = node.at("estimator").as_node();
  c.split = SplitSpec::from_config(node.at("split").as_node());
  c.quantiles = node.at("quantiles").as_double_list();
  c.season_length = static_cast<int>(node.at("season_length").as_int());
  return c;
}

const std::vector<std::string>& registered_types() {
  static const std::vector<std::string> types{
      "Experiment", "SplitSpec", "NptsEstimator", "SsmEstimator", "MlpQrEstimator", "Trainer", "AnomalyConfig",
      "Pipeline",   "MarkMissing", "AddTimeFeatures", "BoxCox", "SynthSpec", "NoNoise", "GaussianNoise",
      "StudentTNoise"};
  return types;
}

bool is_registered(std::string_view type) {
  const auto& t = registered_types();
  return std::find(t.begin(), t.end(), type) != t.end();
}

namespace {

void check_value(const ConfigValue& v) {
  if (const auto* list = std::get_if<ConfigValue::List>(&v.value)) {
    for (const auto& item : *list) check_value(item);
  } else if (const auto* node = std::get_if<ConfigValue::NodePtr>(&v.value)) {
    check_registered(**node);
  }
}

}  // namespace

void check_registered(const ConfigNode& node) {
  if (!is_registered(node.type)) throw ConfigError("unregistered component type '" + node.type + "'");
  for (const auto& [name, value] : node.args) check_value(value);
}

std::string serialize_config(const ConfigNode& node) {
  check_registered(node);
  return to_text(node);
}

ConfigNode deserialize_config(std::string_view text) {
  auto node = parse_text(text);
  check_registered(node);
  return node;
}

std::unique_ptr<Estimator> make_estimator(const ConfigNode& node) {
  if (node.type == "NptsEstimator") return std::make_unique<NptsEstimator>(NptsConfig::from_config(node));
  if (node.type == "SsmEstimator") return std::make_unique<SsmEstimator>(SsmEstimatorConfig::from_config(node));
  if (node.type == "MlpQrEstimator") return std::make_unique<MlpQrEstimator>(MlpQrEstimator::from_config(node));
  if (is_registered(node.type)) throw ConfigError("'" + node.type + "' is not an estimator");
  throw ConfigError("unregistered component type '" + node.type + "'");
}

void write_config_log(const std::filesystem::path& dir, const ConfigNode& node, std::string_view stem) {
  std::filesystem::create_directories(dir);
  const auto base = dir / std::string(stem);
  std::ofstream txt(base.string() + ".txt");
  txt << serialize_config(node);
  std::ofstream json(base.string() + ".json");
  json << to_json(node).dump(2) << "\n";
  if (!txt || !json) throw DatasetError("cannot write config log to '" + dir.string() + "'");
}

ConfigNode read_config_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  if (path.extension() == ".json") {
    auto node = from_json(nlohmann::ordered_json::parse(ss.str()));
    check_registered(node);
    return node;
  }
  return deserialize_config(ss.str());
}

// Synthetic data specs ------------------------------------------------------

ConfigNode synth_spec_to_config(const SynthSpec& spec) {
  ConfigNode noise = std::visit(
      [](const auto& n) -> ConfigNode {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, NoNoise>) {
          return ConfigNode("NoNoise");
        } else if constexpr (std::is_same_v<T, GaussianNoise>) {
          return ConfigNode("GaussianNoise").set("sigma", n.sigma);
        } else {
          return ConfigNode("StudentTNoise").set("dof", n.dof).set("sigma", n.sigma);
        }
      },
      spec.noise);
  ConfigNode node("SynthSpec");
  node.set("num_series", spec.num_series)
      .set("length", spec.length)
      .set("level", spec.level)
      .set("trend_slope", spec.trend_slope)
      .set("season_length", spec.season_length)
      .set("season_amplitude", spec.season_amplitude)
      .set("noise", noise)
      .set("num_static_cats", spec.num_static_cats)
      .set("cat_level_multipliers", ConfigValue::list_of(spec.cat_level_multipliers))
      .set("rng_seed", static_cast<std::int64_t>(spec.rng_seed))
      .set("start", spec.start.to_string())
      .set("freq", spec.freq.to_string());
  return node;
}

SynthSpec synth_spec_from_config(const ConfigNode& node) {
  if (node.type != "SynthSpec") throw ConfigError("expected SynthSpec, got " + node.type);
  SynthSpec s;
  s.num_series = static_cast<int>(node.at("num_series").as_int());
  s.length = static_cast<int>(node.at("length").as_int());
  s.level = node.at("level").as_double();
  s.trend_slope = node.at("trend_slope").as_double();
  s.season_length = static_cast<int>(node.at("season_length").as_int());
  s.season_amplitude = node.at("season_amplitude").as_double();
  const auto& noise = node.at("noise").as_node();
  if (noise.type == "NoNoise") {
    s.noise = NoNoise{};
  } else if (noise.type == "GaussianNoise") {
    s.noise = GaussianNoise{noise.at("sigma").as_double()};
  } else if (noise.type == "StudentTNoise") {
    s.noise = StudentTNoise{noise.at("dof").as_double(), noise.at("sigma").as_double()};
  } else {
    throw ConfigError("unregistered component type '" + noise.type + "'");
  }
  s.num_static_cats = static_cast<int>(node.at("num_static_cats").as_int());
  s.cat_level_multipliers = node.at("cat_level_multipliers").as_double_list();
  s.rng_seed = static_cast<std::uint64_t>(node.at("rng_seed").as_int());
  s.start = Timestamp::parse(node.at("start").as_string());
  s.freq = Frequency::parse(node.at("freq").as_string());
  s.validate();
  return s;
}

SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("synthetic spec must be a JSON object");
  static const std::vector<std::string> known{"num_series", "length", "level", "trend_slope", "season_length",
                                              "season_amplitude", "noise", "num_static_cats",
                                              "cat_level_multipliers", "seed", "start", "freq"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("synthetic spec: unknown key '" + key + "'");
    }
  }
  try {
    SynthSpec s;
    s.num_series = j.value("num_series", s.num_series);
    s.length = j.value("length", s.length);
    s.level = j.value("level", s.level);
    s.trend_slope = j.value("trend_slope", s.trend_slope);
    s.season_length = j.value("season_length", s.season_length);
    s.season_amplitude = j.value("season_amplitude", s.season_amplitude);
    if (j.contains("noise")) {
      const auto& n = j.at("noise");
      const auto type = n.value("type", std::string("gaussian"));
      if (type == "none") {
        s.noise = NoNoise{};
      } else if (type == "gaussian") {
        s.noise = GaussianNoise{n.value("sigma", 1.0)};
      } else if (type == "student_t") {
        s.noise = StudentTNoise{n.value("dof", 3.0), n.value("sigma", 1.0)};
      } else {
        throw ConfigError("synthetic spec: unknown noise type '" + type + "'");
      }
    }
    s.num_static_cats = j.value("num_static_cats", s.num_static_cats);
    if (j.contains("cat_level_multipliers")) {
      s.cat_level_multipliers = j.at("cat_level_multipliers").get<std::vector<double>>();
    }
    s.rng_seed = j.value("seed", s.rng_seed);
    if (j.contains("start")) s.start = Timestamp::parse(j.at("start").get<std::string>());
    if (j.contains("freq")) s.freq = Frequency::parse(j.at("freq").get<std::string>());
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synthetic spec: ") + e.what());
  }
}

}  // namespace probts
