#pragma once

#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>

// Stderr logging gated by the DIFFNET_LOG environment variable:
// quiet|warn|info|debug (or 0-3). Default is warn.

namespace diffnet::logging {

enum class Level : int { quiet = 0, warn = 1, info = 2, debug = 3 };

inline Level level() {
    static Level lv = [] {
        const char* e = std::getenv("DIFFNET_LOG");
        if (!e) return Level::warn;
        if (!std::strcmp(e, "quiet") || !std::strcmp(e, "0")) return Level::quiet;
        if (!std::strcmp(e, "info") || !std::strcmp(e, "2")) return Level::info;
        if (!std::strcmp(e, "debug") || !std::strcmp(e, "3")) return Level::debug;
        return Level::warn;
    }();
    return lv;
}

inline void vemit(const char* tag, const char* fmt, va_list ap) {
    std::fprintf(stderr, "[%s] ", tag);
    std::vfprintf(stderr, fmt, ap);
    std::fputc('\n', stderr);
}

__attribute__((format(printf, 1, 2))) inline void warn(const char* fmt, ...) {
    if (level() < Level::warn) return;
    va_list ap;
    va_start(ap, fmt);
    vemit("warn", fmt, ap);
    va_end(ap);
}

__attribute__((format(printf, 1, 2))) inline void info(const char* fmt, ...) {
    if (level() < Level::info) return;
    va_list ap;
    va_start(ap, fmt);
    vemit("info", fmt, ap);
    va_end(ap);
}

__attribute__((format(printf, 1, 2))) inline void debug(const char* fmt, ...) {
    if (level() < Level::debug) return;
    va_list ap;
    va_start(ap, fmt);
    vemit("debug", fmt, ap);
    va_end(ap);
}

}  // namespace diffnet::logging
