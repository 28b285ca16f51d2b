#include "koppa/log.hpp"

#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace koppa {

LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("KOPPA_LOG");
        if (env == nullptr) return LogLevel::error;
        if (std::strcmp(env, "debug") == 0) return LogLevel::debug;
        if (std::strcmp(env, "info") == 0) return LogLevel::info;
        return LogLevel::error;
    }();
    return level;
}

void log_line(LogLevel level, const char* fmt, ...) {
    if (static_cast<int>(level) > static_cast<int>(log_level())) return;
    std::va_list args;
    va_start(args, fmt);
    std::vfprintf(stderr, fmt, args);
    va_end(args);
    std::fputc('\n', stderr);
}

} // namespace koppa
