#pragma once

#include <atomic>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace zss {

using Index = std::int64_t;
using Shape = std::vector<Index>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << ')';
  return os.str();
}

inline Index shape_numel(const Shape& s) {
  Index n = 1;
  for (Index d : s) n *= d;
  return n;
}

[[noreturn]] inline void fail(const std::string& msg) {
  throw std::invalid_argument(msg);
}

inline void check(bool ok, const std::string& msg) {
  if (!ok) fail(msg);
}

/// When enabled, ops reject non-finite input values up front.
inline std::atomic<bool>& strict_finite_checks() {
  static std::atomic<bool> flag{false};
  return flag;
}

inline constexpr double kPi = 3.14159265358979323846;

}  // namespace zss
