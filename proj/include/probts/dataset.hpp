#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include "probts/common.hpp"
#include "probts/stream.hpp"

namespace probts {

enum class TimeUnit { minute, hour, day, week, month, quarter, year };

struct Frequency {
  TimeUnit unit = TimeUnit::hour;
  int multiple = 1;

  /// Parses "H", "2H", "15min", "D", "W", "M", "Q", "Y" (also "A").
  static Frequency parse(std::string_view text);
  std::string to_string() const;

  /// Default seasonal period: minute 60, hour 24, day 7, week 52, month 12,
  /// quarter 4, year 1. Divided by the multiple when it divides evenly.
  int season_length() const;

  bool operator==(const Frequency&) const = default;
};

/// Seconds since 1970-01-01 00:00:00, no time zone.
struct Timestamp {
  std::int64_t seconds = 0;

  /// Accepts "YYYY-MM-DD HH:MM:SS" and "YYYY-MM-DD".
  static Timestamp parse(std::string_view text);
  std::string to_string() const;

  auto operator<=>(const Timestamp&) const = default;
};

struct CalendarFields {
  int year, month, day;  // month 1..12, day 1..31
  int hour, minute, second;
  int weekday;           // Monday = 0
  int day_of_year;       // 0-based
};

CalendarFields calendar(Timestamp ts);

/// Truncates ts onto the frequency grid. Sets *changed when it moved.
Timestamp align_to_frequency(Timestamp ts, Frequency freq, bool* changed = nullptr);

/// ts advanced by `steps` periods of freq (steps may be negative).
Timestamp add_steps(Timestamp ts, Frequency freq, std::int64_t steps);

struct TimeSeriesRecord {
  std::string item_id;
  Timestamp start;
  Frequency freq;
  std::vector<Observation> target;
  std::vector<std::vector<double>> feat_dynamic_real;
  std::vector<std::int64_t> feat_static_cat;

  std::size_t length() const { return target.size(); }
  /// Throws DatasetError when an invariant is violated.
  void validate() const;

  bool operator==(const TimeSeriesRecord&) const = default;
};

/// Lazily reads one record per line. Unknown keys are ignored; blank lines skipped.
class JsonLinesReader {
 public:
  JsonLinesReader(const std::filesystem::path& path, Frequency freq);

  std::optional<TimeSeriesRecord> next();
  std::size_t line_number() const { return line_; }

 private:
  std::filesystem::path path_;
  Frequency freq_;
  std::ifstream in_;
  std::size_t line_ = 0;
  std::size_t records_ = 0;
};

Stream<TimeSeriesRecord> read_jsonlines(const std::filesystem::path& path, Frequency freq);

/// Parses one jsonlines object; `line` only feeds error messages.
TimeSeriesRecord parse_record(std::string_view json_line, Frequency freq, std::size_t line = 0,
                              std::size_t index = 0);
std::string format_record(const TimeSeriesRecord& record);

class JsonLinesWriter {
 public:
  explicit JsonLinesWriter(const std::filesystem::path& path);
  void write(const TimeSeriesRecord& record);
  std::size_t count() const { return count_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t count_ = 0;
};

/// Returns the number of records written.
std::size_t write_jsonlines(Stream<TimeSeriesRecord> records, const std::filesystem::path& path);

// Synthetic data ------------------------------------------------------------

struct NoNoise {
  bool operator==(const NoNoise&) const = default;
};
struct GaussianNoise {
  double sigma = 1.0;
  bool operator==(const GaussianNoise&) const = default;
};
struct StudentTNoise {
  double dof = 3.0;
  double sigma = 1.0;
  bool operator==(const StudentTNoise&) const = default;
};
using NoiseSpec = std::variant<NoNoise, GaussianNoise, StudentTNoise>;

struct SynthSpec {
  int num_series = 1;
  int length = 100;
  double level = 0.0;
  double trend_slope = 0.0;
  int season_length = 1;
  double season_amplitude = 0.0;
  NoiseSpec noise = NoNoise{};
  int num_static_cats = 0;
  std::vector<double> cat_level_multipliers;
  std::uint64_t rng_seed = 0;
  Timestamp start = Timestamp::parse("2000-01-01 00:00:00");
  Frequency freq;

  void validate() const;
  bool operator==(const SynthSpec&) const = default;
};

/// Series i has category i mod num_static_cats. Value at step t is
/// (level + trend·t + amplitude·sin(2πt/season)) · multiplier + noise.
Stream<TimeSeriesRecord> generate_synthetic(const SynthSpec& spec);

}  // namespace probts
