#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace sdd {

/// Whole-file read; throws std::runtime_error when the file cannot be opened.
std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary then renames, so readers never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// Shortest round-trip decimal form of a double ("0.1", "1e-05", "nan").
std::string format_double(double v);

}  // namespace sdd
