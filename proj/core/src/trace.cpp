#include "rydcpw/trace.hpp"

#include <cmath>
#include <fstream>
#include <ostream>
#include <string>

#include "keyvalue.hpp"
#include "rydcpw/csv.hpp"
#include "rydcpw/error.hpp"

namespace rydcpw {

void ComplexTrace::validate() const {
  if (frequency_hz.size() != s21.size()) throw DomainError("trace: frequency and S21 lengths differ");
  for (std::size_t i = 0; i < frequency_hz.size(); ++i) {
    if (!std::isfinite(frequency_hz[i]) || !std::isfinite(s21[i].real()) || !std::isfinite(s21[i].imag())) {
      throw DomainError("trace: non-finite sample at index " + std::to_string(i));
    }
    if (i > 0 && !(frequency_hz[i] > frequency_hz[i - 1])) {
      throw DomainError("trace: frequencies must be strictly ascending (index " + std::to_string(i) + ")");
    }
  }
}

void ComplexTrace::write_csv(std::ostream& out) const {
  if (std::isfinite(metadata.temperature_k)) out << "# temperature_k = " << csv::format_double(metadata.temperature_k) << '\n';
  if (std::isfinite(metadata.power_w)) out << "# power_w = " << csv::format_double(metadata.power_w) << '\n';
  if (std::isfinite(metadata.delay_s)) out << "# delay_s = " << csv::format_double(metadata.delay_s) << '\n';
  out << "frequency_hz,re_s21,im_s21\n";
  for (std::size_t i = 0; i < size(); ++i) {
    out << csv::format_double(frequency_hz[i]) << ',' << csv::format_double(s21[i].real()) << ','
        << csv::format_double(s21[i].imag()) << '\n';
  }
}

ComplexTrace ComplexTrace::read_csv(std::istream& in, std::string_view origin) {
  const auto doc = csv::read(in, origin);
  ComplexTrace trace;
  for (const auto& comment : doc.comments) {
    const auto eq = comment.find('=');
    if (eq == std::string::npos) continue;
    const auto key = detail::trim(std::string_view(comment).substr(0, eq));
    const auto value = detail::trim(std::string_view(comment).substr(eq + 1));
    double* slot = nullptr;
    if (key == "temperature_k") slot = &trace.metadata.temperature_k;
    if (key == "power_w") slot = &trace.metadata.power_w;
    if (key == "delay_s") slot = &trace.metadata.delay_s;
    if (slot != nullptr) *slot = detail::parse_double(value, origin, 0);
  }
  const int f_col = doc.column("frequency_hz");
  const int re_col = doc.column("re_s21");
  const int im_col = doc.column("im_s21");
  const int mag_col = doc.column("magnitude_db");
  const int ph_col = doc.column("phase_rad");
  if (f_col < 0) throw ConfigError(std::string(origin) + ": missing frequency_hz column");
  const bool cartesian = re_col >= 0 && im_col >= 0;
  if (!cartesian && !(mag_col >= 0 && ph_col >= 0)) {
    throw ConfigError(std::string(origin) + ": need re_s21/im_s21 or magnitude_db/phase_rad columns");
  }
  for (std::size_t r = 0; r < doc.rows.size(); ++r) {
    const auto& row = doc.rows[r];
    const int line = doc.row_lines[r];
    trace.frequency_hz.push_back(csv::to_double(row[static_cast<std::size_t>(f_col)], origin, line));
    if (cartesian) {
      trace.s21.emplace_back(csv::to_double(row[static_cast<std::size_t>(re_col)], origin, line),
                             csv::to_double(row[static_cast<std::size_t>(im_col)], origin, line));
    } else {
      const double mag = std::pow(10.0, csv::to_double(row[static_cast<std::size_t>(mag_col)], origin, line) / 20.0);
      trace.s21.push_back(std::polar(mag, csv::to_double(row[static_cast<std::size_t>(ph_col)], origin, line)));
    }
  }
  try {
    trace.validate();
  } catch (const DomainError& e) {
    throw ConfigError(std::string(origin) + ": " + e.what());
  }
  return trace;
}

ComplexTrace ComplexTrace::read_csv_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trace " + path.string());
  return read_csv(in, path.string());
}

}  // namespace rydcpw
