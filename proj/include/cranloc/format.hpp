#pragma once

#include <charconv>
#include <cmath>
#include <string>

namespace cranloc {

/// Shortest decimal text that round-trips to the same double.
inline std::string format_number(double v) {
  char buf[64];
  // integral values below 2^53 print as plain integers
  const bool integral = std::abs(v) < 9007199254740992.0 && v == std::trunc(v);
  const auto res = integral ? std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed)
                            : std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace cranloc
