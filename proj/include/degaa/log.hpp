#pragma once

#include <cstdio>
#include <cstdlib>
#include <string>

namespace degaa {

// DEGAA_LOG=debug|info|quiet (default info).
inline int log_level() {
  static const int level = [] {
    const char* env = std::getenv("DEGAA_LOG");
    if (env == nullptr) return 1;
    const std::string v(env);
    if (v == "debug") return 2;
    if (v == "quiet") return 0;
    return 1;
  }();
  return level;
}

inline void log_info(const std::string& msg) {
  if (log_level() >= 1) std::fprintf(stderr, "[degaa] %s\n", msg.c_str());
}

inline void log_debug(const std::string& msg) {
  if (log_level() >= 2) std::fprintf(stderr, "[degaa:debug] %s\n", msg.c_str());
}

}  // namespace degaa
