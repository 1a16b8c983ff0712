#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace kbsql::text {

std::string to_lower_ascii(std::string_view s);
std::string to_upper_ascii(std::string_view s);
std::string trim(std::string_view s);
bool starts_with_ci(std::string_view s, std::string_view prefix);
bool iequals(std::string_view a, std::string_view b);
std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::string replace_all(std::string s, std::string_view from, std::string_view to);

/// Decodes UTF-8 into scalar values; invalid bytes decode as U+FFFD.
std::u32string decode_utf8(std::string_view s);
std::string encode_utf8(std::u32string_view s);
void append_utf8(std::string& out, char32_t cp);
std::size_t utf8_length(std::string_view s);

/// Parses a whole string as a finite number.
bool parse_number(std::string_view s, double& out);

}  // namespace kbsql::text
