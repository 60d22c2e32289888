#pragma once

#include <cstdio>
#include <string>

namespace ltvforge::log {

enum class Level { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

// Reads LTVFORGE_LOG (error|warn|info|debug) once; defaults to warn.
Level threshold();

void write(Level level, const std::string& msg);

inline void error(const std::string& msg) { write(Level::kError, msg); }
inline void warn(const std::string& msg) { write(Level::kWarn, msg); }
inline void info(const std::string& msg) { write(Level::kInfo, msg); }
inline void debug(const std::string& msg) { write(Level::kDebug, msg); }

}  // namespace ltvforge::log
