#pragma once

// Line-oriented `key = value` reader shared by the versioned data files.

#include <charconv>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include "rydcpw/error.hpp"

namespace rydcpw::detail {

struct KeyValueLine {
  std::string key;
  std::string value;
  int line = 0;
};

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::vector<KeyValueLine> read_key_values(std::istream& in, std::string_view origin) {
  std::vector<KeyValueLine> out;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line(raw);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) +
                        ": expected 'key = value'");
    }
    out.push_back({std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))),
                   line_no});
  }
  return out;
}

inline std::string where(std::string_view origin, int line) {
  return std::string(origin) + ":" + std::to_string(line);
}

inline double parse_double(std::string_view token, std::string_view origin, int line) {
  double value = 0.0;
  token = trim(token);
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw ConfigError(where(origin, line) + ": not a number: '" + std::string(token) + "'");
  }
  return value;
}

inline int parse_int(std::string_view token, std::string_view origin, int line) {
  int value = 0;
  token = trim(token);
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw ConfigError(where(origin, line) + ": not an integer: '" + std::string(token) + "'");
  }
  return value;
}

inline std::vector<double> parse_doubles(std::string_view text, std::string_view origin, int line) {
  std::vector<double> values;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto start = text.find_first_not_of(" \t", pos);
    if (start == std::string_view::npos) break;
    auto end = text.find_first_of(" \t", start);
    if (end == std::string_view::npos) end = text.size();
    values.push_back(parse_double(text.substr(start, end - start), origin, line));
    pos = end;
  }
  return values;
}

}  // namespace rydcpw::detail
