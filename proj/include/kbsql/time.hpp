#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace kbsql {

using Clock = std::chrono::system_clock;
using Timestamp = std::chrono::sys_seconds;

Timestamp now_utc();

/// "2025-05-01T12:00:00Z"
std::string format_rfc3339(Timestamp t);

/// Accepts "YYYY-MM-DD", "YYYY-MM-DDTHH:MM:SS[Z|+hh:mm]" and the space-separated form.
std::optional<Timestamp> parse_rfc3339(std::string_view text);

Timestamp make_timestamp(int year, unsigned month, unsigned day, int hour = 0, int minute = 0,
                         int second = 0);

}  // namespace kbsql
