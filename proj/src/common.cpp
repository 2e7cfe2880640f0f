#include "probts/common.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>

namespace probts {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::string_view path) {
  // FNV-1a over the path, then mixed with the master seed.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : path) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(master ^ splitmix64(h)) >> 1;
}

namespace log {

namespace {

Level level_from_env() {
  const char* env = std::getenv("PROBTS_LOG_LEVEL");
  if (!env) return Level::warn;
  const std::string_view v(env);
  if (v == "error") return Level::error;
  if (v == "info") return Level::info;
  if (v == "debug") return Level::debug;
  return Level::warn;
}

std::atomic<int>& level_storage() {
  static std::atomic<int> level{static_cast<int>(level_from_env())};
  return level;
}

constexpr std::string_view level_name(Level l) {
  switch (l) {
    case Level::error: return "error";
    case Level::warn: return "warn";
    case Level::info: return "info";
    case Level::debug: return "debug";
  }
  return "?";
}

}  // namespace

Level current_level() { return static_cast<Level>(level_storage().load()); }

void set_level(Level level) { level_storage().store(static_cast<int>(level)); }

void write(Level level, std::string_view message) {
  if (static_cast<int>(level) > level_storage().load()) return;
  std::cerr << "[probts " << level_name(level) << "] " << message << '\n';
}

}  // namespace log

}  // namespace probts
