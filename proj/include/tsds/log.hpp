#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace tsds {

// Verbosity is controlled by the TSDS_LOG environment variable
// (error|warn|info|debug, default warn). Everything goes to stderr;
// log output never affects exit codes or stdout payloads.
enum class LogLevel : int { error = 0, warn = 1, info = 2, debug = 3 };

inline int log_threshold() {
  static const int level = [] {
    const char* v = std::getenv("TSDS_LOG");
    if (v == nullptr) return 1;
    if (std::strcmp(v, "error") == 0) return 0;
    if (std::strcmp(v, "warn") == 0) return 1;
    if (std::strcmp(v, "info") == 0) return 2;
    if (std::strcmp(v, "debug") == 0) return 3;
    return 1;
  }();
  return level;
}

template <typename... Args>
void log_at(LogLevel lvl, const char* fmt, Args... args) {
  if (static_cast<int>(lvl) > log_threshold()) return;
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::fprintf(stderr, "[tsds:%s] ", names[static_cast<int>(lvl)]);
  std::fprintf(stderr, fmt, args...);
  std::fputc('\n', stderr);
}

inline void log_at(LogLevel lvl, const char* msg) { log_at(lvl, "%s", msg); }

}  // namespace tsds
