#pragma once

#include <complex>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <string_view>
#include <vector>

namespace rydcpw {

struct TraceMetadata {
  double temperature_k = std::numeric_limits<double>::quiet_NaN();
  double power_w = std::numeric_limits<double>::quiet_NaN();
  double delay_s = std::numeric_limits<double>::quiet_NaN();
};

/// Frequency-indexed complex transmission S21 (measured or synthesized).
struct ComplexTrace {
  std::vector<double> frequency_hz;
  std::vector<std::complex<double>> s21;
  TraceMetadata metadata;

  std::size_t size() const { return frequency_hz.size(); }

  /// Throws DomainError unless frequencies are strictly ascending and all
  /// samples finite.
  void validate() const;

  /// CSV with columns frequency_hz, re_s21, im_s21; metadata as
  /// `# key = value` comment lines.
  void write_csv(std::ostream& out) const;

  /// Accepts re_s21/im_s21 or magnitude_db/phase_rad columns (either
  /// pair suffices; real/imaginary win when both are present).
  static ComplexTrace read_csv(std::istream& in, std::string_view origin);
  static ComplexTrace read_csv_file(const std::filesystem::path& path);
};

}  // namespace rydcpw
