#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rydcpw/trace.hpp"

namespace rydcpw::resonator {

/// One characterized operating point of the resonator.
struct TemperatureRow {
  double temperature_k = 0.0;
  double nu3_hz = 0.0;
  double q_int = 0.0;
  double q_int_err = 0.0;
  double q_loaded = 0.0;
  double q_loaded_err = 0.0;
};

/// Quarter-wave CPW resonator with a grounded end at z = 0 and an open,
/// capacitively coupled end at z = length.
struct ResonatorParams {
  double length_m = 6.335e-3;
  /// Straight section below the atomic beam, measured from the grounded end.
  double aligned_length_m = 4.858e-3;
  int harmonic_index = 3;
  double critical_temperature_k = 12.1;
  double coupling_phase_rad = 0.0;
  double center_width_m = 20e-6;
  double gap_width_m = 10e-6;
  std::vector<TemperatureRow> temp_table;
  std::string version = "builtin";

  static ResonatorParams load(const std::filesystem::path& path);
  static ResonatorParams parse(std::istream& in, std::string_view origin);

  /// Throws ConfigError on: empty table, non-ascending T, nu3 not strictly
  /// decreasing in T, q_loaded >= q_int, bad geometry or harmonic.
  void validate() const;

  double min_temperature() const { return temp_table.front().temperature_k; }
  double max_temperature() const { return temp_table.back().temperature_k; }

  /// Operating point at T: nu3 by monotone piecewise-cubic interpolation,
  /// quality factors linearly. Throws DomainError outside the table.
  TemperatureRow at(double temperature_k) const;

  /// |Q_c| such that 1/Q_loaded - 1/Q_int = cos(phi)/|Q_c|.
  double coupling_q(double temperature_k) const;
  /// 1-sigma uncertainty of |Q_c| propagated from the table errors.
  double coupling_q_err(double temperature_k) const;

  /// Effective phase velocity matched to the harmonic, the length, and nu3
  /// at the lowest tabulated temperature.
  double phase_velocity() const;
};

/// Built-in copy of the shipped dataset (used when no data file is given).
ResonatorParams default_params();

double mode_frequency(double temperature_k, const ResonatorParams& params);

/// Relative intracavity power 1/(1 + (2 Q_loaded (f/nu3 - 1))^2).
double lorentzian_response(double drive_hz, double temperature_k, const ResonatorParams& params);

/// Field ring-down time Q_loaded / (2 pi nu3).
double ringdown_time(double temperature_k, const ResonatorParams& params);

/// Relative voltage sin(k pi z / (2 L)) of harmonic k; zero at the grounded end.
double mode_profile(double z_m, const ResonatorParams& params);

/// Order-of-magnitude steady-state photon number
///   P_chip (Q_loaded/|Q_c|) L(f) tau / (h nu3),  P_chip = P_source 10^(att/10).
double photon_number(double p_source_w, double attenuation_db, double temperature_k,
                     const ResonatorParams& params, double drive_hz);

/// Gorter-Casimir kinetic-inductance model
///   nu3(T) = nu0 [1 + gamma / (1 - (T/Tc)^4)]^(-1/2),
/// fitted to the table for extrapolation. A model, not data.
struct KineticInductanceModel {
  double nu0_hz = 0.0;
  double gamma = 0.0;
  double critical_temperature_k = 0.0;

  double frequency(double temperature_k) const;
};

KineticInductanceModel fit_kinetic_inductance(const ResonatorParams& params);

/// Cable and line environment of a notch measurement.
struct Environment {
  double amplitude = 1.0;
  double phase_rad = 0.0;
  double delay_s = 0.0;
};

/// Complex white Gaussian noise; the complex RMS is |a| 10^(-snr_db/20).
struct NoiseSpec {
  double snr_db = 40.0;
  std::uint64_t seed = 1;
};

/// Notch-type S21
///   a e^{i alpha} e^{-2 pi i f tau} [1 - (Q_l/|Q_c|) e^{i phi} / (1 + 2 i Q_l (f/nu3 - 1))].
ComplexTrace synth_s21(const ResonatorParams& params, double temperature_k,
                       std::span<const double> frequency_grid, const Environment& environment = {},
                       const std::optional<NoiseSpec>& noise = std::nullopt);

/// Evenly spaced grid nu3 +- span_linewidths * (nu3/Q_loaded).
std::vector<double> linewidth_grid(const ResonatorParams& params, double temperature_k,
                                   double span_linewidths, std::size_t points);

}  // namespace rydcpw::resonator
