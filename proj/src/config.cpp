#include "probts/config.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace probts {

ConfigValue::ConfigValue(ConfigNode node)
    : value(std::make_shared<const ConfigNode>(std::move(node))) {}

bool ConfigValue::as_bool() const {
  if (auto* b = std::get_if<bool>(&value)) return *b;
  throw ConfigError("expected a bool");
}

std::int64_t ConfigValue::as_int() const {
  if (auto* i = std::get_if<std::int64_t>(&value)) return *i;
  throw ConfigError("expected an int");
}

double ConfigValue::as_double() const {
  if (auto* d = std::get_if<double>(&value)) return *d;
  if (auto* i = std::get_if<std::int64_t>(&value)) return static_cast<double>(*i);
  throw ConfigError("expected a float");
}

const std::string& ConfigValue::as_string() const {
  if (auto* s = std::get_if<std::string>(&value)) return *s;
  throw ConfigError("expected a string");
}

const ConfigValue::List& ConfigValue::as_list() const {
  if (auto* l = std::get_if<List>(&value)) return *l;
  throw ConfigError("expected a list");
}

const ConfigNode& ConfigValue::as_node() const {
  if (auto* n = std::get_if<NodePtr>(&value)) return **n;
  throw ConfigError("expected a component");
}

std::vector<double> ConfigValue::as_double_list() const {
  std::vector<double> out;
  for (const auto& v : as_list()) out.push_back(v.as_double());
  return out;
}

std::vector<int> ConfigValue::as_int_list() const {
  std::vector<int> out;
  for (const auto& v : as_list()) out.push_back(static_cast<int>(v.as_int()));
  return out;
}

bool ConfigValue::operator==(const ConfigValue& other) const {
  if (value.index() != other.value.index()) return false;
  if (auto* n = std::get_if<NodePtr>(&value)) {
    return **n == **std::get_if<NodePtr>(&other.value);
  }
  if (auto* d = std::get_if<double>(&value)) {
    const double o = *std::get_if<double>(&other.value);
    return *d == o || (std::isnan(*d) && std::isnan(o));
  }
  return value == other.value;
}

ConfigNode& ConfigNode::set(std::string name, ConfigValue v) {
  for (auto& [k, existing] : args) {
    if (k == name) {
      existing = std::move(v);
      return *this;
    }
  }
  args.emplace_back(std::move(name), std::move(v));
  return *this;
}

bool ConfigNode::has(std::string_view name) const {
  for (const auto& [k, v] : args) {
    if (k == name) return true;
  }
  return false;
}

const ConfigValue& ConfigNode::at(std::string_view name) const {
  for (const auto& [k, v] : args) {
    if (k == name) return v;
  }
  throw ConfigError(type + ": missing argument '" + std::string(name) + "'");
}

bool ConfigNode::operator==(const ConfigNode& other) const {
  return type == other.type && args == other.args;
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  std::string s(buf, end);
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

// Text format ---------------------------------------------------------------

namespace {

std::string quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\'': out += "\\'"; break;
      case '\n': out += "\\n"; break;
      default: out += c;
    }
  }
  return out + "'";
}

bool is_flat(const ConfigValue& v) {
  if (std::holds_alternative<ConfigValue::NodePtr>(v.value)) return false;
  if (auto* l = std::get_if<ConfigValue::List>(&v.value)) {
    for (const auto& x : *l) {
      if (!is_flat(x)) return false;
    }
  }
  return true;
}

void write_node(std::ostringstream& out, const ConfigNode& node, int indent);

void write_value(std::ostringstream& out, const ConfigValue& v, int indent) {
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, std::nullptr_t>) {
          out << "None";
        } else if constexpr (std::is_same_v<T, bool>) {
          out << (x ? "True" : "False");
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          out << x;
        } else if constexpr (std::is_same_v<T, double>) {
          out << format_double(x);
        } else if constexpr (std::is_same_v<T, std::string>) {
          out << quote(x);
        } else if constexpr (std::is_same_v<T, ConfigValue::List>) {
          if (is_flat(v)) {
            out << '[';
            for (std::size_t i = 0; i < x.size(); ++i) {
              if (i) out << ", ";
              write_value(out, x[i], indent);
            }
            out << ']';
          } else {
            const std::string pad(indent + 2, ' ');
            out << "[\n";
            for (std::size_t i = 0; i < x.size(); ++i) {
              out << pad;
              write_value(out, x[i], indent + 2);
              out << (i + 1 < x.size() ? ",\n" : "\n");
            }
            out << std::string(indent, ' ') << ']';
          }
        } else {
          write_node(out, *x, indent);
        }
      },
      v.value);
}

void write_node(std::ostringstream& out, const ConfigNode& node, int indent) {
  out << node.type << '(';
  if (node.args.empty()) {
    out << ')';
    return;
  }
  out << '\n';
  const std::string pad(indent + 2, ' ');
  for (std::size_t i = 0; i < node.args.size(); ++i) {
    out << pad << node.args[i].first << '=';
    write_value(out, node.args[i].second, indent + 2);
    out << (i + 1 < node.args.size() ? ",\n" : "\n");
  }
  out << std::string(indent, ' ') << ')';
}

class Parser {
 public:
  explicit Parser(std::string_view text) : s_(text) {}

  ConfigNode parse_document() {
    skip_ws();
    auto node = parse_node();
    skip_ws();
    if (pos_ != s_.size()) fail("trailing characters");
    return node;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("config parse error at offset " + std::to_string(pos_) + ": " + what);
  }

  void skip_ws() {
    while (pos_ < s_.size()) {
      const char c = s_[pos_];
      if (c == ' ' || c == '\n' || c == '\t' || c == '\r') {
        ++pos_;
      } else if (c == '#') {
        while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  bool consume(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!consume(c)) fail(std::string("expected '") + c + "'");
  }

  static bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
  }

  std::string parse_ident() {
    skip_ws();
    const std::size_t begin = pos_;
    while (pos_ < s_.size() && ident_char(s_[pos_])) ++pos_;
    if (begin == pos_) fail("expected identifier");
    return std::string(s_.substr(begin, pos_ - begin));
  }

  ConfigNode parse_node() {
    ConfigNode node(parse_ident());
    expect('(');
    if (consume(')')) return node;
    while (true) {
      std::string name = parse_ident();
      expect('=');
      node.args.emplace_back(std::move(name), parse_value());
      if (consume(')')) break;
      expect(',');
      if (consume(')')) break;
    }
    return node;
  }

  ConfigValue parse_value() {
    skip_ws();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    const char c = s_[pos_];
    if (c == '\'') return parse_string();
    if (c == '[') {
      ++pos_;
      ConfigValue::List list;
      if (consume(']')) return ConfigValue(std::move(list));
      while (true) {
        list.push_back(parse_value());
        if (consume(']')) break;
        expect(',');
        if (consume(']')) break;
      }
      return ConfigValue(std::move(list));
    }
    if (c == '-' || c == '+' || std::isdigit(static_cast<unsigned char>(c))) return parse_number();
    const std::size_t save = pos_;
    const std::string word = parse_ident();
    if (word == "None") return nullptr;
    if (word == "True") return true;
    if (word == "False") return false;
    if (word == "inf") return kInf;
    if (word == "nan") return kNaN;
    pos_ = save;
    return ConfigValue(parse_node());
  }

  ConfigValue parse_string() {
    ++pos_;
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '\'') {
      char c = s_[pos_++];
      if (c == '\\') {
        if (pos_ >= s_.size()) fail("dangling escape");
        const char e = s_[pos_++];
        out += e == 'n' ? '\n' : e;
      } else {
        out += c;
      }
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return ConfigValue(std::move(out));
  }

  ConfigValue parse_number() {
    const std::size_t begin = pos_;
    if (s_[pos_] == '-' || s_[pos_] == '+') ++pos_;
    if (s_.substr(pos_, 3) == "inf") {
      pos_ += 3;
      return s_[begin] == '-' ? -kInf : kInf;
    }
    bool is_float = false;
    while (pos_ < s_.size()) {
      const char c = s_[pos_];
      if (std::isdigit(static_cast<unsigned char>(c))) {
        ++pos_;
      } else if (c == '.' || c == 'e' || c == 'E' ||
                 ((c == '-' || c == '+') && (s_[pos_ - 1] == 'e' || s_[pos_ - 1] == 'E'))) {
        is_float = true;
        ++pos_;
      } else {
        break;
      }
    }
    std::string_view tok = s_.substr(begin, pos_ - begin);
    if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
    if (is_float) {
      double d = 0;
      auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), d);
      if (ec != std::errc{} || p != tok.data() + tok.size()) fail("bad float");
      return d;
    }
    std::int64_t i = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), i);
    if (ec != std::errc{} || p != tok.data() + tok.size()) fail("bad int");
    return i;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

nlohmann::ordered_json value_to_json(const ConfigValue& v) {
  return std::visit(
      [](const auto& x) -> nlohmann::ordered_json {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, std::nullptr_t>) {
          return nullptr;
        } else if constexpr (std::is_same_v<T, double>) {
          if (!std::isfinite(x)) return {{"__float__", format_double(x)}};
          return x;
        } else if constexpr (std::is_same_v<T, ConfigValue::List>) {
          auto arr = nlohmann::ordered_json::array();
          for (const auto& item : x) arr.push_back(value_to_json(item));
          return arr;
        } else if constexpr (std::is_same_v<T, ConfigValue::NodePtr>) {
          return to_json(*x);
        } else {
          return x;
        }
      },
      v.value);
}

ConfigValue value_from_json(const nlohmann::ordered_json& j) {
  if (j.is_null()) return nullptr;
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_number_float()) return j.get<double>();
  if (j.is_string()) return j.get<std::string>();
  if (j.is_array()) {
    ConfigValue::List l;
    for (const auto& x : j) l.push_back(value_from_json(x));
    return ConfigValue(std::move(l));
  }
  if (j.is_object() && j.contains("__float__")) {
    const auto s = j["__float__"].get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    return kNaN;
  }
  return ConfigValue(from_json(j));
}

}  // namespace

std::string to_text(const ConfigNode& node) {
  std::ostringstream out;
  write_node(out, node, 0);
  out << '\n';
  return out.str();
}

ConfigNode parse_text(std::string_view text) { return Parser(text).parse_document(); }

nlohmann::ordered_json to_json(const ConfigNode& node) {
  nlohmann::ordered_json j;
  j["__type__"] = node.type;
  for (const auto& [k, v] : node.args) j[k] = value_to_json(v);
  return j;
}

ConfigNode from_json(const nlohmann::ordered_json& j) {
  if (!j.is_object() || !j.contains("__type__")) throw ConfigError("json component lacks __type__");
  ConfigNode node(j["__type__"].get<std::string>());
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "__type__") continue;
    node.args.emplace_back(it.key(), value_from_json(it.value()));
  }
  return node;
}

}  // namespace probts
