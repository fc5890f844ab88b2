#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace rydcpw::atoms {

/// One zero-field level of the triplet-helium Rydberg series in the
/// quantum-defect model. `energy_hz` is the term energy below the
/// ionization limit, expressed as a frequency (negative).
struct RydbergLevel {
  int n = 0;
  int l = 0;
  int m = 0;
  double defect = 0.0;
  double n_star = 0.0;
  double energy_hz = 0.0;

  friend bool operator==(const RydbergLevel&, const RydbergLevel&) = default;
};

/// Quantum defects per (series, l) as Rydberg-Ritz expansions
///   delta(n) = d0 + d2/(n - d0)^2 + d4/(n - d0)^4 + ...
/// Orbital momenta at or above the cutoff are hydrogenic (delta = 0).
///
/// Text format (one `key = value` per line, `#` comments):
///   format = rydcpw-defects
///   version = <tag>
///   rydberg_constant_hz = <R c for the core>
///   series = <name>
///   cutoff_l = <l>
///   <series>.<l> = d0 [d2 [d4 ...]] | <source tag>
class DefectTable {
 public:
  struct Entry {
    std::vector<double> ritz;  // d0, d2, d4, ...
    std::string source;
  };

  /// Zero defects everywhere (hydrogenic), helium-4 Rydberg constant.
  static DefectTable hydrogenic(int cutoff_l = 0);

  static DefectTable load(const std::filesystem::path& path);
  static DefectTable parse(std::istream& in, std::string_view origin);

  void set_entry(int l, Entry entry);

  /// Quantum defect of (n, l) in this table's series. Throws ConfigError if
  /// l is below the cutoff and no entry exists.
  double defect(int n, int l) const;

  const std::string& version() const { return version_; }
  const std::string& series() const { return series_; }
  int cutoff_l() const { return cutoff_l_; }
  double rydberg_hz() const { return rydberg_hz_; }
  const std::map<int, Entry>& entries() const { return entries_; }

  void set_rydberg_hz(double value);
  void set_cutoff_l(int l);

 private:
  void validate() const;

  std::string version_ = "builtin";
  std::string series_ = "triplet";
  int cutoff_l_ = 0;
  double rydberg_hz_ = 0.0;
  std::map<int, Entry> entries_;
};

/// Term energy -R/(n - delta)^2 in Hz.
double level_energy(int n, int l, const DefectTable& defects);

RydbergLevel make_level(int n, int l, int m, const DefectTable& defects);

/// E(b) - E(a) in Hz.
double transition_frequency(const RydbergLevel& a, const RydbergLevel& b);

/// Classical saddle-point ionization field 1/(16 n*^4) in atomic units,
/// returned in V/cm.
double classical_ionization_field(const RydbergLevel& level);

/// Quadratic Stark coefficient. The level shift is -alpha F^2 / 2 with
/// alpha in GHz/(V/cm)^2 and F in V/cm.
struct Polarizability {
  RydbergLevel level;
  double alpha_ghz = 0.0;
  double residual = 0.0;  // RMS fit residual relative to the RMS shift
  int points = 0;
};

/// Shift of the two-photon half-frequency nu_ab/2 in a static field F (V/cm):
/// -(alpha_b - alpha_a) F^2 / 4, in Hz.
double two_photon_stark_shift(double field_v_per_cm, const Polarizability& lower,
                              const Polarizability& upper);
double two_photon_stark_shift(double field_v_per_cm, double alpha_lower_ghz,
                              double alpha_upper_ghz);

}  // namespace rydcpw::atoms
