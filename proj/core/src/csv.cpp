#include "rydcpw/csv.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "keyvalue.hpp"
#include "rydcpw/error.hpp"

namespace rydcpw::csv {

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  if (value == 0.0) value = 0.0;  // no "-0"
  std::array<char, 64> buffer{};
  const auto [ptr, ec] = std::to_chars(buffer.data(), buffer.data() + buffer.size(), value);
  if (ec != std::errc()) return "nan";
  return std::string(buffer.data(), ptr);
}

int Document::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

namespace {

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.emplace_back(detail::trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

}  // namespace

Document read(std::istream& in, std::string_view origin) {
  Document doc;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = detail::trim(raw);
    if (line.empty()) continue;
    if (line.front() == '#') {
      doc.comments.emplace_back(detail::trim(line.substr(1)));
      continue;
    }
    auto cells = split(line);
    if (doc.header.empty()) {
      doc.header = std::move(cells);
      continue;
    }
    if (cells.size() != doc.header.size()) {
      throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(doc.header.size()) + " columns, found " + std::to_string(cells.size()));
    }
    doc.rows.push_back(std::move(cells));
    doc.row_lines.push_back(line_no);
  }
  if (doc.header.empty()) throw ConfigError(std::string(origin) + ": missing CSV header");
  return doc;
}

Document read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read(in, path.string());
}

double to_double(std::string_view cell, std::string_view origin, int line) {
  return detail::parse_double(cell, origin, line);
}

void write_comment(std::ostream& out, std::string_view text) { out << "# " << text << '\n'; }

}  // namespace rydcpw::csv
