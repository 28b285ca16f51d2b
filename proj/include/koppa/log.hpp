#ifndef KOPPA_LOG_HPP
#define KOPPA_LOG_HPP

namespace koppa {

// Verbosity read once from the KOPPA_LOG environment variable:
// "error" (default, silent except failures), "info", or "debug".
enum class LogLevel { error = 0, info = 1, debug = 2 };

LogLevel log_level();

// printf-style message to stderr, shown when `level` is enabled.
void log_line(LogLevel level, const char* fmt, ...);

} // namespace koppa

#endif
