#pragma once

#include <filesystem>
#include <string>

namespace taegcn::io {

/// Shortest decimal form that parses back to the same double.
std::string format_double(double value);

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// never observe a truncated file.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

}  // namespace taegcn::io
