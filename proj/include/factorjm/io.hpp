#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace factorjm::io {

/// Shortest round-trip decimal form ("%.17g"); locale independent.
std::string format_number(double x);

std::vector<std::string> split_csv_line(std::string_view line);
std::string_view trim(std::string_view s);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);

/// 64-bit FNV-1a, stable across platforms.
std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t v);

}  // namespace factorjm::io
