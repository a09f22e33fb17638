#pragma once

#include <atomic>
#include <iostream>
#include <sstream>
#include <string_view>

namespace convrec {

enum class LogLevel { quiet = 0, info = 1, debug = 2 };

inline std::atomic<LogLevel>& log_level() {
  static std::atomic<LogLevel> level{LogLevel::info};
  return level;
}

template <class... Args>
void log_at(LogLevel level, Args&&... args) {
  if (log_level().load() < level) return;
  std::ostringstream os;
  (os << ... << std::forward<Args>(args));
  std::clog << "[convrec] " << os.str() << '\n';
}

template <class... Args>
void log_info(Args&&... args) {
  log_at(LogLevel::info, std::forward<Args>(args)...);
}

template <class... Args>
void log_warn(Args&&... args) {
  log_at(LogLevel::info, "warning: ", std::forward<Args>(args)...);
}

template <class... Args>
void log_debug(Args&&... args) {
  log_at(LogLevel::debug, std::forward<Args>(args)...);
}

}  // namespace convrec
