#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace vulbin::text {

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
bool starts_with_ci(std::string_view s, std::string_view prefix);

// Splits on '\n'; a trailing newline does not produce an empty last line.
std::vector<std::string_view> split_lines(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Largest prefix length <= max_bytes that does not cut a UTF-8 sequence.
std::size_t utf8_safe_prefix(std::string_view s, std::size_t max_bytes);

std::string hex_address(std::uint64_t address);  // "0x401130"
std::uint64_t parse_address(std::string_view s);  // accepts "0x..." or bare hex

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace vulbin::text
