#pragma once

#include <string>
#include <string_view>

namespace kbsql {

/// Lowercase hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view data);

/// Appends `<len>:<bytes>;` so concatenated fields cannot collide.
inline void append_field(std::string& out, std::string_view bytes) {
  out += std::to_string(bytes.size());
  out += ':';
  out.append(bytes);
  out += ';';
}

}  // namespace kbsql
