#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "rydcpw/circlefit.hpp"
#include "rydcpw/dynamics.hpp"
#include "rydcpw/fieldmap.hpp"
#include "rydcpw/resonator.hpp"
#include "rydcpw/stark.hpp"

namespace rydcpw::config {

// One YAML file describes a reproduction scenario. Every section is
// optional; absent keys keep the library defaults. Sweeps are written either
// as a list or as {start, stop, step} / {start, stop, count}. Unknown keys
// and type errors raise ConfigError with "file:line:column".

struct StarkSettings {
  atoms::StarkBasisSpec basis;
  std::vector<double> fields_v_per_cm;        // Stark-map grid
  std::vector<double> shift_fields_v_per_cm;  // two-photon shift table
  double polarizability_max_field_v_per_cm = 0.05;
  int lower_n = 55;
  int upper_n = 56;
};

struct DumpRegion {
  double max_abs_x_m = 300e-6;
  double y_min_m = -50e-6;
  double y_max_m = 400e-6;
};

struct CalibrationSettings {
  /// Calibrate kappa before simulating when the experiment gives none.
  bool auto_calibrate = false;
  double target_rabi_hz = 3e6;
  double p_source_w = 12.6e-3;
  double t_cpw_k = 3.65;
  dynamics::ReferencePoint point;
};

struct SpectrumSettings {
  std::vector<double> temperatures_k{3.65, 3.90, 4.10, 4.30};
  std::vector<double> offsets_hz;  // drive - nu/2
};

struct RabiSettings {
  std::vector<double> durations_s;
  std::vector<double> detunings_hz{0.0, 2e6};  // drive - nu/2
};

struct CompscanSettings {
  std::vector<double> voltages_v;
  /// Without an explicit comp coefficient, it is set so the net field
  /// vanishes at this voltage.
  double optimum_v = 1.45;
};

struct SynthSettings {
  std::vector<double> temperatures_k{3.65, 3.90, 4.10, 4.30};
  double span_linewidths = 6.0;
  std::size_t points = 10001;
  double snr_db = 0.0;  // <= 0: noiseless
  resonator::Environment environment;
};

struct FitresSettings {
  std::vector<std::filesystem::path> inputs;  // files or directories
  circlefit::FitOptions options;
};

struct RunConfig {
  std::filesystem::path source;  // empty for built-in defaults
  std::string text;              // exact bytes, hashed into the manifest

  std::filesystem::path defects_path;    // empty: shipped dataset
  std::filesystem::path resonator_path;  // empty: shipped dataset

  StarkSettings stark;
  fieldmap::CpwGeometry geometry;
  fieldmap::GridSpec grid;
  DumpRegion dump;
  dynamics::SharedModels models;  // resonator and cross-section filled later
  dynamics::ExperimentConfig experiment;
  bool kappa_given = false;
  CalibrationSettings calibration;
  SpectrumSettings spectrum;
  RabiSettings rabi;
  CompscanSettings compscan;
  SynthSettings synth;
  FitresSettings fitres;

  static RunConfig load(const std::filesystem::path& path);
  static RunConfig parse(std::string_view text, std::string_view origin,
                         const std::filesystem::path& base_dir = {});
  /// Defaults for every section (no file).
  static RunConfig defaults();
};

/// Shipped data directory: $RYDCPW_DATA_DIR, then the source tree, then the
/// install prefix.
std::filesystem::path data_directory();

/// Shipped or configured defect table / resonator dataset.
atoms::DefectTable load_defects(const RunConfig& config);
resonator::ResonatorParams load_resonator(const RunConfig& config);

/// Record of one CLI run.
struct RunManifest {
  std::string command;
  std::string config_path;
  std::uint64_t seed = 0;
  std::vector<std::string> outputs;
  std::map<std::string, std::string> versions;
  std::string hash;  // hex FNV-1a of command, config bytes, seed, versions

  std::string to_json() const;
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t state = 0xcbf29ce484222325ULL);

std::string manifest_hash(std::string_view command, std::string_view config_text, std::uint64_t seed,
                          const std::map<std::string, std::string>& versions);

}  // namespace rydcpw::config
