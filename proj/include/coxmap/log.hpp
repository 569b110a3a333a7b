#pragma once

#include <string>

namespace coxmap {

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, Error = 3, Quiet = 4 };

/// Current level, parsed once from the COXMAP_LOG environment variable
/// (debug|info|warn|error|quiet, default warn).
LogLevel log_level();

void log_debug(const std::string& msg);
void log_info(const std::string& msg);
void log_warn(const std::string& msg);
void log_error(const std::string& msg);

}  // namespace coxmap
