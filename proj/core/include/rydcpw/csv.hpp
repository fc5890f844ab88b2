#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace rydcpw::csv {

/// Shortest round-trip decimal representation; locale independent, so CSV
/// output is byte-identical across runs and platforms.
std::string format_double(double value);

/// A parsed CSV document: `#` comment lines (without the leading '#',
/// trimmed), a header row, and data rows of raw cells.
struct Document {
  std::vector<std::string> comments;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> row_lines;  // 1-based source line of each row

  /// Column index by name, or -1.
  int column(std::string_view name) const;
};

Document read(std::istream& in, std::string_view origin);
Document read_file(const std::filesystem::path& path);

/// Parses a numeric cell; throws ConfigError naming origin and line.
double to_double(std::string_view cell, std::string_view origin, int line);

/// Writes `# key: value` style comment lines.
void write_comment(std::ostream& out, std::string_view text);

}  // namespace rydcpw::csv
