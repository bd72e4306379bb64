#include "sfk/log.hpp"

#include <iostream>
#include <mutex>

namespace sfk {
namespace {

std::mutex& log_mutex() {
  static std::mutex m;
  return m;
}
LogSink& sink() {
  static LogSink s;
  return s;
}
LogLevel& threshold() {
  static LogLevel l = LogLevel::kInfo;
  return l;
}

const char* level_name(LogLevel level) {
  switch (level) {
    case LogLevel::kDebug: return "debug";
    case LogLevel::kInfo: return "info";
    case LogLevel::kWarn: return "warning";
    case LogLevel::kError: return "error";
  }
  return "?";
}

}  // namespace

void set_log_sink(LogSink s) {
  std::lock_guard lock(log_mutex());
  sink() = std::move(s);
}

void set_log_level(LogLevel level) {
  std::lock_guard lock(log_mutex());
  threshold() = level;
}

void log(LogLevel level, const std::string& message) {
  std::lock_guard lock(log_mutex());
  if (level < threshold()) return;
  if (sink()) {
    sink()(level, message);
  } else {
    std::cerr << "sfkit: " << level_name(level) << ": " << message << '\n';
  }
}

}  // namespace sfk
