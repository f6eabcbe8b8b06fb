#pragma once

// Small helpers shared by the CSV-like readers and writers.

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "icegcn/error.hpp"

namespace icegcn::text {

/// Shortest representation that parses back to the same bits.
inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) throw Error("failed to format value");
  return std::string(buf.data(), ptr);
}

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

/// Parses a double; "nan"/"inf" are accepted so callers can report them.
inline double parse_double(std::string_view s, std::size_t line) {
  s = trim(s);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ValidationError("line " + std::to_string(line) + ": cannot parse number '" +
                          std::string(s) + "'");
  }
  return v;
}

inline std::uint64_t parse_index(std::string_view s, std::size_t line) {
  s = trim(s);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ValidationError("line " + std::to_string(line) + ": cannot parse index '" +
                          std::string(s) + "'");
  }
  return v;
}

/// Reads `key=value` tokens from a header such as `# mesh v1 units=km`.
inline std::string header_field(std::string_view header, std::string_view key) {
  for (auto tok : split(header, ' ')) {
    if (tok.size() > key.size() && tok.substr(0, key.size()) == key &&
        tok[key.size()] == '=') {
      return std::string(tok.substr(key.size() + 1));
    }
  }
  return {};
}

}  // namespace icegcn::text
