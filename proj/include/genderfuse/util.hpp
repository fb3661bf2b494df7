#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace genderfuse {

// Writes `contents` to a sibling temp file and renames it over `path`, so an
// interrupted write never leaves a truncated file behind.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view contents);

std::string read_file(const std::filesystem::path& path);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

// FNV-1a, used for vocabulary fingerprints.
std::uint64_t fnv1a(std::string_view data,
                    std::uint64_t hash = 0xcbf29ce484222325ULL);

std::string format_fixed(double value, int decimals);

}  // namespace genderfuse
