#pragma once

#include <cstdio>
#include <filesystem>
#include <string>

namespace diffnet {

// Shortest-round-trip decimal for a double; stable across runs and platforms.
inline std::string format_g17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string read_text_file(const std::filesystem::path& path);  // throws DataError
void write_text_file(const std::filesystem::path& path, const std::string& content);

// write to "<path>.tmp" then rename, so readers never see a partial file
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace diffnet
