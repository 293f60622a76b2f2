#pragma once

#include <cstdlib>
#include <iostream>
#include <string>
#include <string_view>

namespace mclq {

enum class LogLevel { error = 0, info = 1, debug = 2 };

/// Threshold read once from MCLQ_LOG (error, info or debug); defaults to info.
inline LogLevel log_threshold() {
  static const LogLevel level = [] {
    const char* env = std::getenv("MCLQ_LOG");
    const std::string_view v = env ? env : "info";
    if (v == "error") return LogLevel::error;
    if (v == "debug") return LogLevel::debug;
    return LogLevel::info;
  }();
  return level;
}

inline void log(LogLevel level, const std::string& message) {
  if (level > log_threshold()) return;
  static constexpr const char* tags[] = {"error", "info", "debug"};
  std::cerr << "[mclq " << tags[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace mclq
