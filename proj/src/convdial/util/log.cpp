#include "convdial/util/log.hpp"

#include <mutex>

#include "convdial/util/error.hpp"

namespace convdial {

namespace {

std::mutex g_mutex;
LogSink g_sink;
LogLevel g_max = LogLevel::kInfo;

}  // namespace

LogLevel parse_log_level(const std::string& text) {
  if (text == "error") return LogLevel::kError;
  if (text == "warn") return LogLevel::kWarn;
  if (text == "info") return LogLevel::kInfo;
  if (text == "debug") return LogLevel::kDebug;
  throw InvalidArgument("unknown log level '" + text + "' (expected error, warn, info or debug)");
}

const char* to_string(LogLevel level) {
  switch (level) {
    case LogLevel::kError:
      return "error";
    case LogLevel::kWarn:
      return "warn";
    case LogLevel::kInfo:
      return "info";
    case LogLevel::kDebug:
      return "debug";
  }
  return "?";
}

void set_log_sink(LogSink sink, LogLevel max_level) {
  std::lock_guard lock(g_mutex);
  g_sink = std::move(sink);
  g_max = max_level;
}

void log_message(LogLevel level, const std::string& message) {
  std::lock_guard lock(g_mutex);
  if (g_sink && level <= g_max) g_sink(level, message);
}

}  // namespace convdial
