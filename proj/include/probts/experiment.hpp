#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "probts/evaluation.hpp"
#include "probts/model.hpp"

namespace probts {

/// Everything needed to re-run one command.
struct ExperimentConfig {
  std::string command = "backtest";
  std::uint64_t seed = 0;
  std::string data;
  std::string freq = "H";
  ConfigNode estimator;
  SplitSpec split;
  std::vector<double> quantiles = kDefaultQuantiles;
  /// 0 uses the frequency default.
  int season_length = 0;

  ConfigNode to_config() const;
  static ExperimentConfig from_config(const ConfigNode& node);
  bool operator==(const ExperimentConfig&) const = default;
};

/// Component types that can appear in a configuration.
const std::vector<std::string>& registered_types();
bool is_registered(std::string_view type);
/// Throws ConfigError naming the first unregistered type in the tree.
void check_registered(const ConfigNode& node);

/// Text form after checking every component is registered.
std::string serialize_config(const ConfigNode& node);
ConfigNode deserialize_config(std::string_view text);

std::unique_ptr<Estimator> make_estimator(const ConfigNode& node);

/// Writes <stem>.txt and <stem>.json into dir.
void write_config_log(const std::filesystem::path& dir, const ConfigNode& node,
                      std::string_view stem = "config");
/// Reads either form, chosen by file extension.
ConfigNode read_config_log(const std::filesystem::path& path);

ConfigNode synth_spec_to_config(const SynthSpec& spec);
SynthSpec synth_spec_from_config(const ConfigNode& node);
/// Plain JSON object with the SynthSpec field names; noise as
/// {"type": "none" | "gaussian" | "student_t", "sigma": ..., "dof": ...}.
SynthSpec synth_spec_from_json(const nlohmann::json& j);

}  // namespace probts
