#pragma once

#include <functional>
#include <string>

namespace convdial {

enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

/// "error", "warn", "info", "debug".
LogLevel parse_log_level(const std::string& text);
const char* to_string(LogLevel level);

using LogSink = std::function<void(LogLevel, const std::string&)>;

/// Process-wide sink; an empty sink discards messages. Messages above
/// `max_level` are dropped before reaching it.
void set_log_sink(LogSink sink, LogLevel max_level = LogLevel::kInfo);
void log_message(LogLevel level, const std::string& message);

inline void log_info(const std::string& m) { log_message(LogLevel::kInfo, m); }
inline void log_debug(const std::string& m) { log_message(LogLevel::kDebug, m); }
inline void log_warn(const std::string& m) { log_message(LogLevel::kWarn, m); }

}  // namespace convdial
