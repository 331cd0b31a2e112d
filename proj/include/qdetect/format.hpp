#pragma once

#include <charconv>
#include <cmath>
#include <string>

namespace qdetect {

// Shortest decimal form that reads back to the same double; "inf" / "nan"
// for the non-finite values.
inline std::string num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

}  // namespace qdetect
