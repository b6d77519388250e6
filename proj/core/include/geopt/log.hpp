#pragma once

#include <string>

namespace geopt {

enum class LogLevel { error = 0, warning = 1, info = 2, debug = 3 };

/// Verbosity from the GEO_OPT_LOG environment variable
/// (error|warn|info|debug or 0..3, default warn). Read once, cached.
LogLevel log_level();

void log_message(LogLevel level, const std::string& msg);

inline void log_error(const std::string& msg) { log_message(LogLevel::error, msg); }
inline void log_warning(const std::string& msg) { log_message(LogLevel::warning, msg); }
inline void log_info(const std::string& msg) { log_message(LogLevel::info, msg); }
inline void log_debug(const std::string& msg) { log_message(LogLevel::debug, msg); }

}  // namespace geopt
