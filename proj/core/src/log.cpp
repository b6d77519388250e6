#include "geopt/log.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>

#include "geopt/errors.hpp"

namespace geopt {

namespace {

LogLevel parse_level(const char* value) {
  if (value == nullptr) return LogLevel::warning;
  std::string v(value);
  if (v == "error" || v == "0") return LogLevel::error;
  if (v == "warn" || v == "warning" || v == "1") return LogLevel::warning;
  if (v == "info" || v == "2") return LogLevel::info;
  if (v == "debug" || v == "3") return LogLevel::debug;
  return LogLevel::warning;
}

const char* level_tag(LogLevel level) {
  switch (level) {
    case LogLevel::error: return "error";
    case LogLevel::warning: return "warn";
    case LogLevel::info: return "info";
    case LogLevel::debug: return "debug";
  }
  return "?";
}

std::mutex& log_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

LogLevel log_level() {
  static const LogLevel level = parse_level(std::getenv("GEO_OPT_LOG"));
  return level;
}

void log_message(LogLevel level, const std::string& msg) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  std::lock_guard<std::mutex> lock(log_mutex());
  std::cerr << "[geopt:" << level_tag(level) << "] " << msg << '\n';
}

void warn(WarningLog* log, std::string code, std::string message) {
  log_message(LogLevel::warning, code + ": " + message);
  if (log != nullptr) log->push_back({std::move(code), std::move(message)});
}

}  // namespace geopt
