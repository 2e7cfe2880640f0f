#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace probts {

using Rng = std::mt19937_64;

/// A target observation; std::nullopt marks a missing value.
using Observation = std::optional<double>;
inline constexpr std::nullopt_t kMissing = std::nullopt;

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input data. Carries the 1-based line number when known.
class DatasetError : public Error {
 public:
  DatasetError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

/// Numerical breakdown; step is the 1-based time step where it occurred (0 if n/a).
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, std::size_t step = 0)
      : Error(step ? what + " at step " + std::to_string(step) : what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

/// Stable seed derivation: mixes a master seed with a component path.
/// Results fit in 63 bits so they survive signed config fields.
std::uint64_t derive_seed(std::uint64_t master, std::string_view path);

namespace log {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

/// Verbosity comes from PROBTS_LOG_LEVEL (error|warn|info|debug), default warn.
Level current_level();
void set_level(Level level);
void write(Level level, std::string_view message);

inline void warn(std::string_view m) { write(Level::warn, m); }
inline void info(std::string_view m) { write(Level::info, m); }
inline void debug(std::string_view m) { write(Level::debug, m); }

}  // namespace log

}  // namespace probts
