#pragma once

#include <functional>
#include <string>

namespace sfk {

enum class LogLevel { kDebug, kInfo, kWarn, kError };

/// Process-wide sink; defaults to stderr at kInfo. Thread-safe.
using LogSink = std::function<void(LogLevel, const std::string&)>;
void set_log_sink(LogSink sink);
void set_log_level(LogLevel level);

void log(LogLevel level, const std::string& message);
inline void log_info(const std::string& m) { log(LogLevel::kInfo, m); }
inline void log_warn(const std::string& m) { log(LogLevel::kWarn, m); }
inline void log_debug(const std::string& m) { log(LogLevel::kDebug, m); }

}  // namespace sfk
