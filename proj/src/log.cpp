#include "coxmap/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace coxmap {

static LogLevel parse_level() {
  const char* env = std::getenv("COXMAP_LOG");
  if (env == nullptr) return LogLevel::Warn;
  if (std::strcmp(env, "debug") == 0) return LogLevel::Debug;
  if (std::strcmp(env, "info") == 0) return LogLevel::Info;
  if (std::strcmp(env, "warn") == 0) return LogLevel::Warn;
  if (std::strcmp(env, "error") == 0) return LogLevel::Error;
  if (std::strcmp(env, "quiet") == 0) return LogLevel::Quiet;
  return LogLevel::Warn;
}

LogLevel log_level() {
  static const LogLevel level = parse_level();
  return level;
}

static void emit(LogLevel at, const char* tag, const std::string& msg) {
  if (log_level() > at) return;
  std::fprintf(stderr, "[%s] %s\n", tag, msg.c_str());
}

void log_debug(const std::string& msg) { emit(LogLevel::Debug, "debug", msg); }
void log_info(const std::string& msg) { emit(LogLevel::Info, "info", msg); }
void log_warn(const std::string& msg) { emit(LogLevel::Warn, "warn", msg); }
void log_error(const std::string& msg) { emit(LogLevel::Error, "error", msg); }

}  // namespace coxmap
