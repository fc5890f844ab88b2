#pragma once

// Physical constants (CODATA 2018) and unit conversions used across modules.

namespace rydcpw::constants {

inline constexpr double pi = 3.14159265358979323846;

inline constexpr double speed_of_light = 299792458.0;          // m/s
inline constexpr double planck = 6.62607015e-34;                // J s
inline constexpr double vacuum_permittivity = 8.8541878128e-12; // F/m

/// Rydberg constant times c, infinite nuclear mass.
inline constexpr double rydberg_infinity_hz = 3.2898419602508e15;

/// Electron mass and helium-4 atomic mass in unified atomic mass units.
inline constexpr double electron_mass_u = 5.48579909065e-4;
inline constexpr double helium4_atomic_mass_u = 4.00260325413;

/// Hartree energy expressed as a frequency.
inline constexpr double hartree_hz = 6.579683920502e15;

/// Atomic unit of electric field.
inline constexpr double atomic_field_v_per_m = 5.14220674763e11;
inline constexpr double atomic_field_v_per_cm = 5.14220674763e9;

/// Mass-corrected Rydberg frequency for a 4He+ core.
constexpr double helium4_rydberg_hz() {
  const double core_mass_u = helium4_atomic_mass_u - electron_mass_u;
  return rydberg_infinity_hz / (1.0 + electron_mass_u / core_mass_u);
}

}  // namespace rydcpw::constants
