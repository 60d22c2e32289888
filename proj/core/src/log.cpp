#include "ltvforge/log.hpp"

#include <cstdlib>
#include <cstring>

namespace ltvforge::log {

static Level parse_env() {
    const char* env = std::getenv("LTVFORGE_LOG");
    if (env == nullptr) return Level::kWarn;
    if (std::strcmp(env, "error") == 0) return Level::kError;
    if (std::strcmp(env, "warn") == 0) return Level::kWarn;
    if (std::strcmp(env, "info") == 0) return Level::kInfo;
    if (std::strcmp(env, "debug") == 0) return Level::kDebug;
    return Level::kWarn;
}

Level threshold() {
    static const Level level = parse_env();
    return level;
}

void write(Level level, const std::string& msg) {
    if (level > threshold()) return;
    static const char* names[] = {"error", "warn", "info", "debug"};
    std::fprintf(stderr, "[ltvforge:%s] %s\n", names[static_cast<int>(level)], msg.c_str());
}

}  // namespace ltvforge::log
