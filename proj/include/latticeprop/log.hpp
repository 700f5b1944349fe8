#pragma once

#include <cstdio>

namespace latticeprop {

enum class LogLevel : int { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

// Level comes from LATTICEPROP_LOG in {error, warn, info, debug}; default warn.
LogLevel log_level();

bool log_enabled(LogLevel level);

void log_message(LogLevel level, const char* fmt, ...);

#define LP_LOG(level, ...)                                   \
  do {                                                       \
    if (::latticeprop::log_enabled(level))                   \
      ::latticeprop::log_message(level, __VA_ARGS__);        \
  } while (0)

#define LP_ERROR(...) LP_LOG(::latticeprop::LogLevel::kError, __VA_ARGS__)
#define LP_WARN(...) LP_LOG(::latticeprop::LogLevel::kWarn, __VA_ARGS__)
#define LP_INFO(...) LP_LOG(::latticeprop::LogLevel::kInfo, __VA_ARGS__)
#define LP_DEBUG(...) LP_LOG(::latticeprop::LogLevel::kDebug, __VA_ARGS__)

}  // namespace latticeprop
