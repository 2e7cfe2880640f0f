#include "probts/dataset.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numbers>

#include <json.hpp>

namespace probts {

namespace chr = std::chrono;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

// Frequency -----------------------------------------------------------------

Frequency Frequency::parse(std::string_view text) {
  std::size_t pos = 0;
  while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
  int multiple = 1;
  if (pos > 0) {
    auto [p, ec] = std::from_chars(text.data(), text.data() + pos, multiple);
    if (ec != std::errc{} || multiple < 1) {
      throw ConfigError("invalid frequency multiple in '" + std::string(text) + "'");
    }
  }
  std::string code(text.substr(pos));
  // Anchored pandas-style suffixes ("W-SUN", "MS") collapse onto the base unit.
  if (auto dash = code.find('-'); dash != std::string::npos) code.resize(dash);
  TimeUnit unit;
  if (code == "min" || code == "T") {
    unit = TimeUnit::minute;
  } else if (code == "H" || code == "h") {
    unit = TimeUnit::hour;
  } else if (code == "D" || code == "d" || code == "B") {
    unit = TimeUnit::day;
  } else if (code == "W" || code == "w") {
    unit = TimeUnit::week;
  } else if (code == "M" || code == "MS") {
    unit = TimeUnit::month;
  } else if (code == "Q" || code == "QS") {
    unit = TimeUnit::quarter;
  } else if (code == "Y" || code == "A" || code == "YS" || code == "AS") {
    unit = TimeUnit::year;
  } else {
    throw ConfigError("unknown frequency '" + std::string(text) + "'");
  }
  return Frequency{unit, multiple};
}

std::string Frequency::to_string() const {
  std::string code;
  switch (unit) {
    case TimeUnit::minute: code = "min"; break;
    case TimeUnit::hour: code = "H"; break;
    case TimeUnit::day: code = "D"; break;
    case TimeUnit::week: code = "W"; break;
    case TimeUnit::month: code = "M"; break;
    case TimeUnit::quarter: code = "Q"; break;
    case TimeUnit::year: code = "Y"; break;
  }
  return multiple == 1 ? code : std::to_string(multiple) + code;
}

int Frequency::season_length() const {
  int base = 1;
  switch (unit) {
    case TimeUnit::minute: base = 60; break;
    case TimeUnit::hour: base = 24; break;
    case TimeUnit::day: base = 7; break;
    case TimeUnit::week: base = 52; break;
    case TimeUnit::month: base = 12; break;
    case TimeUnit::quarter: base = 4; break;
    case TimeUnit::year: base = 1; break;
  }
  if (multiple > 1 && base % multiple == 0) return base / multiple;
  return base;
}

// Timestamp -----------------------------------------------------------------

namespace {

constexpr std::int64_t kDay = 86400;

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

Timestamp from_civil(int y, int m, int d, std::int64_t second_of_day) {
  const chr::sys_days days{chr::year{y} / chr::month{static_cast<unsigned>(m)} /
                           chr::day{static_cast<unsigned>(d)}};
  return Timestamp{static_cast<std::int64_t>(days.time_since_epoch().count()) * kDay +
                   second_of_day};
}

int parse_int(std::string_view s, std::string_view whole) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw DatasetError("invalid timestamp '" + std::string(whole) + "'");
  }
  return v;
}

}  // namespace

Timestamp Timestamp::parse(std::string_view text) {
  // YYYY-MM-DD[ HH:MM:SS]
  if (text.size() != 10 && text.size() != 19) {
    throw DatasetError("invalid timestamp '" + std::string(text) + "'");
  }
  if (text[4] != '-' || text[7] != '-') throw DatasetError("invalid timestamp '" + std::string(text) + "'");
  const int y = parse_int(text.substr(0, 4), text);
  const int mo = parse_int(text.substr(5, 2), text);
  const int d = parse_int(text.substr(8, 2), text);
  int h = 0, mi = 0, s = 0;
  if (text.size() == 19) {
    if ((text[10] != ' ' && text[10] != 'T') || text[13] != ':' || text[16] != ':') {
      throw DatasetError("invalid timestamp '" + std::string(text) + "'");
    }
    h = parse_int(text.substr(11, 2), text);
    mi = parse_int(text.substr(14, 2), text);
    s = parse_int(text.substr(17, 2), text);
  }
  const chr::year_month_day ymd{chr::year{y}, chr::month{static_cast<unsigned>(mo)},
                                chr::day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 59) {
    throw DatasetError("invalid timestamp '" + std::string(text) + "'");
  }
  return from_civil(y, mo, d, h * 3600 + mi * 60 + s);
}

CalendarFields calendar(Timestamp ts) {
  const std::int64_t days = floor_div(ts.seconds, kDay);
  const std::int64_t sod = ts.seconds - days * kDay;
  const chr::sys_days sd{chr::days{days}};
  const chr::year_month_day ymd{sd};
  const chr::weekday wd{sd};
  const chr::sys_days jan1{ymd.year() / chr::January / 1};
  CalendarFields f{};
  f.year = static_cast<int>(ymd.year());
  f.month = static_cast<int>(static_cast<unsigned>(ymd.month()));
  f.day = static_cast<int>(static_cast<unsigned>(ymd.day()));
  f.hour = static_cast<int>(sod / 3600);
  f.minute = static_cast<int>((sod / 60) % 60);
  f.second = static_cast<int>(sod % 60);
  f.weekday = static_cast<int>(wd.iso_encoding()) - 1;
  f.day_of_year = static_cast<int>((sd - jan1).count());
  return f;
}

std::string Timestamp::to_string() const {
  const auto f = calendar(*this);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d %02d:%02d:%02d", f.year, f.month, f.day, f.hour,
                f.minute, f.second);
  return buf;
}

Timestamp align_to_frequency(Timestamp ts, Frequency freq, bool* changed) {
  const auto f = calendar(ts);
  const int m = freq.multiple;
  Timestamp out;
  switch (freq.unit) {
    case TimeUnit::minute: {
      const int minute_of_day = f.hour * 60 + f.minute;
      out = from_civil(f.year, f.month, f.day, (minute_of_day - minute_of_day % m) * 60);
      break;
    }
    case TimeUnit::hour:
      out = from_civil(f.year, f.month, f.day, (f.hour - f.hour % m) * 3600);
      break;
    case TimeUnit::day:
      out = from_civil(f.year, f.month, f.day, 0);
      break;
    case TimeUnit::week:
      out = Timestamp{from_civil(f.year, f.month, f.day, 0).seconds - f.weekday * kDay};
      break;
    case TimeUnit::month:
      out = from_civil(f.year, f.month, 1, 0);
      break;
    case TimeUnit::quarter:
      out = from_civil(f.year, f.month - (f.month - 1) % 3, 1, 0);
      break;
    case TimeUnit::year:
      out = from_civil(f.year, 1, 1, 0);
      break;
  }
  if (changed) *changed = out != ts;
  return out;
}

Timestamp add_steps(Timestamp ts, Frequency freq, std::int64_t steps) {
  const std::int64_t n = steps * freq.multiple;
  switch (freq.unit) {
    case TimeUnit::minute: return Timestamp{ts.seconds + n * 60};
    case TimeUnit::hour: return Timestamp{ts.seconds + n * 3600};
    case TimeUnit::day: return Timestamp{ts.seconds + n * kDay};
    case TimeUnit::week: return Timestamp{ts.seconds + n * 7 * kDay};
    case TimeUnit::month:
    case TimeUnit::quarter:
    case TimeUnit::year: {
      const std::int64_t months =
          n * (freq.unit == TimeUnit::month ? 1 : freq.unit == TimeUnit::quarter ? 3 : 12);
      const auto f = calendar(ts);
      const std::int64_t total = static_cast<std::int64_t>(f.year) * 12 + (f.month - 1) + months;
      const int y = static_cast<int>(floor_div(total, 12));
      const int mo = static_cast<int>(total - static_cast<std::int64_t>(y) * 12) + 1;
      const chr::year_month_day_last last{chr::year{y} / chr::month{static_cast<unsigned>(mo)} /
                                          chr::last};
      const int d = std::min(f.day, static_cast<int>(static_cast<unsigned>(last.day())));
      return from_civil(y, mo, d, f.hour * 3600 + f.minute * 60 + f.second);
    }
  }
  return ts;
}

// Records -------------------------------------------------------------------

void TimeSeriesRecord::validate() const {
  if (target.empty()) throw DatasetError("record '" + item_id + "': empty target");
  for (const auto& feat : feat_dynamic_real) {
    if (feat.size() < target.size()) {
      throw DatasetError("record '" + item_id + "': dynamic feature shorter than target");
    }
  }
  for (auto c : feat_static_cat) {
    if (c < 0) throw DatasetError("record '" + item_id + "': negative static category");
  }
}

TimeSeriesRecord parse_record(std::string_view json_line, Frequency freq, std::size_t line,
                              std::size_t index) {
  json obj;
  try {
    obj = json::parse(json_line);
  } catch (const json::parse_error& e) {
    throw DatasetError(std::string("malformed json: ") + e.what(), line);
  }
  if (!obj.is_object()) throw DatasetError("expected a json object", line);
  auto start_it = obj.find("start");
  auto target_it = obj.find("target");
  if (start_it == obj.end() || !start_it->is_string()) {
    throw DatasetError("schema: missing string field \"start\"", line);
  }
  if (target_it == obj.end() || !target_it->is_array()) {
    throw DatasetError("schema: missing array field \"target\"", line);
  }

  TimeSeriesRecord rec;
  rec.freq = freq;
  try {
    bool moved = false;
    rec.start = align_to_frequency(Timestamp::parse(start_it->get<std::string>()), freq, &moved);
    if (moved) {
      log::warn("line " + std::to_string(line) + ": start " + start_it->get<std::string>() +
                " truncated to " + rec.start.to_string() + " for frequency " + freq.to_string());
    }
  } catch (const DatasetError& e) {
    throw DatasetError(e.what(), line);
  }

  rec.target.reserve(target_it->size());
  for (const auto& v : *target_it) {
    if (v.is_null()) {
      rec.target.push_back(kMissing);
    } else if (v.is_number()) {
      rec.target.push_back(v.get<double>());
    } else {
      throw DatasetError("schema: target entries must be numbers or null", line);
    }
  }

  if (auto it = obj.find("item_id"); it != obj.end() && !it->is_null()) {
    rec.item_id = it->is_string() ? it->get<std::string>() : it->dump();
  } else {
    rec.item_id = std::to_string(index);
  }

  if (auto it = obj.find("feat_dynamic_real"); it != obj.end() && !it->is_null()) {
    if (!it->is_array()) throw DatasetError("schema: feat_dynamic_real must be an array", line);
    for (const auto& row : *it) {
      if (!row.is_array()) throw DatasetError("schema: feat_dynamic_real rows must be arrays", line);
      std::vector<double> feat;
      feat.reserve(row.size());
      for (const auto& v : row) {
        if (!v.is_number()) throw DatasetError("schema: feat_dynamic_real entries must be numbers", line);
        feat.push_back(v.get<double>());
      }
      rec.feat_dynamic_real.push_back(std::move(feat));
    }
  }

  if (auto it = obj.find("feat_static_cat"); it != obj.end() && !it->is_null()) {
    if (!it->is_array()) throw DatasetError("schema: feat_static_cat must be an array", line);
    for (const auto& v : *it) {
      if (!v.is_number_integer()) throw DatasetError("schema: feat_static_cat entries must be integers", line);
      rec.feat_static_cat.push_back(v.get<std::int64_t>());
    }
  }

  try {
    rec.validate();
  } catch (const DatasetError& e) {
    throw DatasetError(e.what(), line);
  }
  return rec;
}

std::string format_record(const TimeSeriesRecord& record) {
  ojson obj;
  obj["start"] = record.start.to_string();
  ojson target = ojson::array();
  for (const auto& v : record.target) {
    if (v) {
      target.push_back(*v);
    } else {
      target.push_back(nullptr);
    }
  }
  obj["target"] = std::move(target);
  if (!record.feat_static_cat.empty()) obj["feat_static_cat"] = record.feat_static_cat;
  if (!record.feat_dynamic_real.empty()) obj["feat_dynamic_real"] = record.feat_dynamic_real;
  obj["item_id"] = record.item_id;
  return obj.dump();
}

JsonLinesReader::JsonLinesReader(const std::filesystem::path& path, Frequency freq)
    : path_(path), freq_(freq), in_(path) {
  if (!in_) throw DatasetError("cannot open '" + path.string() + "'");
}

std::optional<TimeSeriesRecord> JsonLinesReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    return parse_record(line, freq_, line_, records_++);
  }
  if (in_.bad()) throw DatasetError("read failure on '" + path_.string() + "'", line_);
  return std::nullopt;
}

Stream<TimeSeriesRecord> read_jsonlines(const std::filesystem::path& path, Frequency freq) {
  auto reader = std::make_shared<JsonLinesReader>(path, freq);
  return Stream<TimeSeriesRecord>([reader] { return reader->next(); });
}

JsonLinesWriter::JsonLinesWriter(const std::filesystem::path& path) : path_(path), out_(path) {
  if (!out_) throw DatasetError("cannot open '" + path.string() + "' for writing");
}

void JsonLinesWriter::write(const TimeSeriesRecord& record) {
  out_ << format_record(record) << '\n';
  if (!out_) throw DatasetError("write failure on '" + path_.string() + "'");
  ++count_;
}

std::size_t write_jsonlines(Stream<TimeSeriesRecord> records, const std::filesystem::path& path) {
  JsonLinesWriter writer(path);
  for (auto& rec : records) writer.write(rec);
  return writer.count();
}

// Synthetic -----------------------------------------------------------------

void SynthSpec::validate() const {
  if (num_series < 1) throw ConfigError("synthetic: num_series must be positive");
  if (length < 1) throw ConfigError("synthetic: length must be positive");
  if (season_length < 1) throw ConfigError("synthetic: season_length must be positive");
  if (season_amplitude < 0) throw ConfigError("synthetic: season_amplitude must be non-negative");
  if (num_static_cats < 0) throw ConfigError("synthetic: num_static_cats must be non-negative");
  if (num_static_cats > 0 &&
      cat_level_multipliers.size() != static_cast<std::size_t>(num_static_cats)) {
    throw ConfigError("synthetic: need one level multiplier per static category");
  }
  for (double m : cat_level_multipliers) {
    if (!(m > 0)) throw ConfigError("synthetic: level multipliers must be positive");
  }
  if (const auto* g = std::get_if<GaussianNoise>(&noise); g && !(g->sigma >= 0)) {
    throw ConfigError("synthetic: noise sigma must be non-negative");
  }
  if (const auto* t = std::get_if<StudentTNoise>(&noise); t && (!(t->sigma >= 0) || !(t->dof > 0))) {
    throw ConfigError("synthetic: student-t noise needs dof > 0 and sigma >= 0");
  }
}

Stream<TimeSeriesRecord> generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  auto index = std::make_shared<int>(0);
  return Stream<TimeSeriesRecord>([spec, index]() -> std::optional<TimeSeriesRecord> {
    if (*index >= spec.num_series) return std::nullopt;
    const int i = (*index)++;
    Rng rng(derive_seed(spec.rng_seed, "series/" + std::to_string(i)));

    TimeSeriesRecord rec;
    rec.item_id = std::to_string(i);
    rec.freq = spec.freq;
    rec.start = spec.start;
    double multiplier = 1.0;
    if (spec.num_static_cats > 0) {
      const int cat = i % spec.num_static_cats;
      multiplier = spec.cat_level_multipliers[cat];
      rec.feat_static_cat.push_back(cat);
    }
    rec.target.reserve(spec.length);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int t = 0; t < spec.length; ++t) {
      const double season =
          spec.season_amplitude * std::sin(2.0 * std::numbers::pi * t / spec.season_length);
      double value = (spec.level + spec.trend_slope * t + season) * multiplier;
      if (const auto* g = std::get_if<GaussianNoise>(&spec.noise)) {
        value += g->sigma * normal(rng);
      } else if (const auto* st = std::get_if<StudentTNoise>(&spec.noise)) {
        std::student_t_distribution<double> student(st->dof);
        value += st->sigma * student(rng);
      }
      rec.target.push_back(value);
    }
    return rec;
  });
}

}  // namespace probts
