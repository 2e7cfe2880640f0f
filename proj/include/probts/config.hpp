#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "probts/common.hpp"

namespace probts {

struct ConfigNode;

/// A configuration value: None, bool, int, float, string, list, or nested component.
struct ConfigValue {
  using List = std::vector<ConfigValue>;
  using NodePtr = std::shared_ptr<const ConfigNode>;
  std::variant<std::nullptr_t, bool, std::int64_t, double, std::string, List, NodePtr> value;

  ConfigValue() : value(nullptr) {}
  ConfigValue(std::nullptr_t) : value(nullptr) {}
  ConfigValue(bool b) : value(b) {}
  ConfigValue(int i) : value(static_cast<std::int64_t>(i)) {}
  ConfigValue(std::int64_t i) : value(i) {}
  ConfigValue(std::uint64_t i) : value(static_cast<std::int64_t>(i)) {}
  ConfigValue(double d) : value(d) {}
  ConfigValue(const char* s) : value(std::string(s)) {}
  ConfigValue(std::string s) : value(std::move(s)) {}
  ConfigValue(List l) : value(std::move(l)) {}
  ConfigValue(ConfigNode node);

  template <typename T>
  static ConfigValue list_of(const std::vector<T>& items) {
    List l;
    l.reserve(items.size());
    for (const auto& x : items) l.emplace_back(x);
    return ConfigValue(std::move(l));
  }

  bool is_none() const { return std::holds_alternative<std::nullptr_t>(value); }
  bool as_bool() const;
  std::int64_t as_int() const;
  /// Accepts ints as well.
  double as_double() const;
  const std::string& as_string() const;
  const List& as_list() const;
  const ConfigNode& as_node() const;
  std::vector<double> as_double_list() const;
  std::vector<int> as_int_list() const;

  bool operator==(const ConfigValue& other) const;
};

/// A component: its type name plus ordered constructor arguments.
struct ConfigNode {
  std::string type;
  std::vector<std::pair<std::string, ConfigValue>> args;

  ConfigNode() = default;
  explicit ConfigNode(std::string t) : type(std::move(t)) {}

  ConfigNode& set(std::string name, ConfigValue v);
  bool has(std::string_view name) const;
  /// Throws ConfigError naming the component and argument when absent.
  const ConfigValue& at(std::string_view name) const;

  bool operator==(const ConfigNode& other) const;
};

/// Indented constructor-call notation, e.g.
///   NptsEstimator(
///     alpha=1.5,
///     kernel='exponential'
///   )
std::string to_text(const ConfigNode& node);
ConfigNode parse_text(std::string_view text);

nlohmann::ordered_json to_json(const ConfigNode& node);
ConfigNode from_json(const nlohmann::ordered_json& j);

/// Shortest decimal that round-trips; always distinguishable from an integer.
std::string format_double(double x);

}  // namespace probts
