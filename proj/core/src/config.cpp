#include "rydcpw/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "rydcpw/error.hpp"

namespace rydcpw::config {
namespace {

namespace fs = std::filesystem;

class Reader {
 public:
  Reader(std::string origin, fs::path base_dir) : origin_(std::move(origin)), base_(std::move(base_dir)) {}

  std::string where(const YAML::Node& node) const {
    const auto mark = node.Mark();
    if (mark.line < 0) return origin_;
    return origin_ + ":" + std::to_string(mark.line + 1) + ":" + std::to_string(mark.column + 1);
  }

  [[noreturn]] void fail(const YAML::Node& node, const std::string& what) const {
    throw ConfigError(where(node) + ": " + what);
  }

  // Rejects keys outside `allowed` so typos do not silently fall back to defaults.
  void expect_map(const YAML::Node& node, std::string_view section, std::initializer_list<std::string_view> allowed) const {
    if (!node.IsMap()) fail(node, "section '" + std::string(section) + "' must be a mapping");
    const std::set<std::string_view> keys(allowed);
    for (const auto& kv : node) {
      const auto key = kv.first.as<std::string>();
      if (!keys.contains(key)) {
        std::string list;
        for (auto k : allowed) list += (list.empty() ? "" : ", ") + std::string(k);
        fail(kv.first, "unknown key '" + key + "' in '" + std::string(section) + "' (expected one of: " + list + ")");
      }
    }
  }

  template <class T>
  T scalar(const YAML::Node& node, std::string_view key) const {
    if (!node.IsScalar()) fail(node, "'" + std::string(key) + "' must be a scalar");
    try {
      return node.as<T>();
    } catch (const YAML::Exception&) {
      fail(node, "'" + std::string(key) + "' has the wrong type: '" + node.Scalar() + "'");
    }
  }

  double number(const YAML::Node& node, std::string_view key) const {
    const auto v = scalar<double>(node, key);
    if (!std::isfinite(v)) fail(node, "'" + std::string(key) + "' must be finite");
    return v;
  }

  template <class T>
  void get(const YAML::Node& map, std::string_view key, T& out) const {
    const auto node = map[std::string(key)];
    if (!node) return;
    if constexpr (std::is_same_v<T, double>) {
      out = number(node, key);
    } else {
      out = scalar<T>(node, key);
    }
  }

  void get_positive(const YAML::Node& map, std::string_view key, double& out) const {
    const auto node = map[std::string(key)];
    if (!node) return;
    const double v = number(node, key);
    if (!(v > 0.0)) fail(node, "'" + std::string(key) + "' must be positive (got " + node.Scalar() + ")");
    out = v;
  }

  // List, or {start, stop, step} / {start, stop, count}; point i is start + i * step.
  std::vector<double> sweep(const YAML::Node& node, std::string_view key) const {
    std::vector<double> out;
    if (node.IsSequence()) {
      for (const auto& item : node) out.push_back(number(item, key));
      return out;
    }
    if (node.IsScalar()) return {number(node, key)};
    if (!node.IsMap()) fail(node, "'" + std::string(key) + "' must be a list or a {start, stop, step|count} mapping");
    expect_map(node, key, {"start", "stop", "step", "count"});
    if (!node["start"] || !node["stop"]) fail(node, "'" + std::string(key) + "' needs start and stop");
    const double start = number(node["start"], "start");
    const double stop = number(node["stop"], "stop");
    if (node["step"] && node["count"]) fail(node, "'" + std::string(key) + "': give step or count, not both");
    if (node["count"]) {
      const auto count = scalar<long>(node["count"], "count");
      if (count < 1) fail(node["count"], "count must be >= 1");
      if (count == 1) return {start};
      const double step = (stop - start) / static_cast<double>(count - 1);
      for (long i = 0; i < count; ++i) out.push_back(start + static_cast<double>(i) * step);
      out.back() = stop;
      return out;
    }
    if (!node["step"]) fail(node, "'" + std::string(key) + "' needs step or count");
    const double step = number(node["step"], "step");
    if (!(step > 0.0)) fail(node["step"], "step must be positive");
    if (stop < start) fail(node, "'" + std::string(key) + "': stop must not precede start");
    const auto n = static_cast<long>(std::floor((stop - start) / step + 1e-9));
    for (long i = 0; i <= n; ++i) out.push_back(start + static_cast<double>(i) * step);
    return out;
  }

  void get_sweep(const YAML::Node& map, std::string_view key, std::vector<double>& out) const {
    const auto node = map[std::string(key)];
    if (node) out = sweep(node, key);
  }

  fs::path path(const YAML::Node& node, std::string_view key) const {
    fs::path p(scalar<std::string>(node, key));
    if (p.is_relative() && !base_.empty()) p = base_ / p;
    return p;
  }

 private:
  std::string origin_;
  fs::path base_;
};

std::vector<double> arange(double start, double stop, double step) {
  std::vector<double> out;
  const auto n = static_cast<long>(std::floor((stop - start) / step + 1e-9));
  for (long i = 0; i <= n; ++i) out.push_back(start + static_cast<double>(i) * step);
  return out;
}

void read_stark(const Reader& r, const YAML::Node& n, StarkSettings& s) {
  r.expect_map(n, "stark", {"n_min", "n_max", "l_max", "m", "fields_v_per_cm", "shift_fields_v_per_cm",
                            "polarizability_max_field_v_per_cm", "lower_n", "upper_n"});
  r.get(n, "n_min", s.basis.n_min);
  r.get(n, "n_max", s.basis.n_max);
  r.get(n, "l_max", s.basis.l_max);
  r.get(n, "m", s.basis.m);
  r.get_sweep(n, "fields_v_per_cm", s.fields_v_per_cm);
  r.get_sweep(n, "shift_fields_v_per_cm", s.shift_fields_v_per_cm);
  r.get_positive(n, "polarizability_max_field_v_per_cm", s.polarizability_max_field_v_per_cm);
  r.get(n, "lower_n", s.lower_n);
  r.get(n, "upper_n", s.upper_n);
  if (s.basis.n_min < 1 || s.basis.n_max < s.basis.n_min) r.fail(n, "stark: need 1 <= n_min <= n_max");
  for (int level : {s.lower_n, s.upper_n}) {
    if (level < s.basis.n_min || level > s.basis.n_max) {
      r.fail(n, "stark: level n = " + std::to_string(level) + " lies outside the basis n_min..n_max");
    }
  }
  for (double f : s.fields_v_per_cm) {
    if (f < 0.0) r.fail(n, "stark: fields must be non-negative");
  }
}

void read_geometry(const Reader& r, const YAML::Node& n, fieldmap::CpwGeometry& g) {
  r.expect_map(n, "geometry", {"center_width_m", "gap_width_m", "substrate_permittivity", "box_half_width_m",
                               "box_height_m", "box_depth_m"});
  r.get(n, "center_width_m", g.center_width_m);
  r.get(n, "gap_width_m", g.gap_width_m);
  r.get(n, "substrate_permittivity", g.substrate_permittivity);
  r.get(n, "box_half_width_m", g.box_half_width_m);
  r.get(n, "box_height_m", g.box_height_m);
  r.get(n, "box_depth_m", g.box_depth_m);
  try {
    g.validate();
  } catch (const ConfigError& e) {
    r.fail(n, e.what());
  }
}

void read_grid(const Reader& r, const YAML::Node& n, fieldmap::GridSpec& g) {
  r.expect_map(n, "grid", {"min_step_m", "roi_step_m", "max_step_m", "growth", "roi_half_width_m", "roi_height_m",
                           "refinement_sweeps", "tolerance"});
  r.get_positive(n, "min_step_m", g.min_step_m);
  r.get_positive(n, "roi_step_m", g.roi_step_m);
  r.get_positive(n, "max_step_m", g.max_step_m);
  r.get_positive(n, "growth", g.growth);
  r.get_positive(n, "roi_half_width_m", g.roi_half_width_m);
  r.get_positive(n, "roi_height_m", g.roi_height_m);
  r.get(n, "refinement_sweeps", g.refinement_sweeps);
  r.get_positive(n, "tolerance", g.tolerance);
  if (!(g.growth > 1.0)) r.fail(n, "grid: growth must exceed 1");
  if (!(g.min_step_m <= g.roi_step_m && g.roi_step_m <= g.max_step_m)) {
    r.fail(n, "grid: need min_step_m <= roi_step_m <= max_step_m");
  }
}

void read_ensemble(const Reader& r, const YAML::Node& n, fieldmap::EnsembleSpec& e) {
  r.expect_map(n, "ensemble", {"center_height_m", "fwhm_x_m", "fwhm_y_m", "bunch_length_m", "n_samples", "seed"});
  r.get(n, "center_height_m", e.center_height_m);
  r.get(n, "fwhm_x_m", e.fwhm_x_m);
  r.get(n, "fwhm_y_m", e.fwhm_y_m);
  r.get(n, "bunch_length_m", e.bunch_length_m);
  r.get(n, "n_samples", e.n_samples);
  r.get(n, "seed", e.seed);
  try {
    e.validate();
  } catch (const ConfigError& err) {
    r.fail(n, err.what());
  }
}

void read_experiment(const Reader& r, const YAML::Node& n, dynamics::ExperimentConfig& x, bool& kappa_given) {
  r.expect_map(n, "experiment",
               {"drive_frequency_hz", "p_source_w", "attenuation_db", "pulse_duration_s", "pulse_start_s",
                "antinode_time_s", "t_cpw_k", "beam_velocity_m_s", "atom_motion", "ensemble", "stray_field_v_per_cm",
                "comp_coefficient_v_per_cm_per_v", "comp_voltage_v", "kappa_hz_per_v2_m2", "s_ac_hz_per_v2_m2"});
  r.get_positive(n, "drive_frequency_hz", x.drive_frequency_hz);
  r.get_positive(n, "p_source_w", x.p_source_w);
  r.get(n, "attenuation_db", x.attenuation_db);
  r.get(n, "pulse_duration_s", x.pulse_duration_s);
  r.get(n, "pulse_start_s", x.pulse_start_s);
  r.get(n, "antinode_time_s", x.antinode_time_s);
  r.get_positive(n, "t_cpw_k", x.t_cpw_k);
  r.get_positive(n, "beam_velocity_m_s", x.beam_velocity_m_s);
  r.get(n, "atom_motion", x.atom_motion);
  if (const auto e = n["ensemble"]) read_ensemble(r, e, x.ensemble);
  r.get(n, "stray_field_v_per_cm", x.stray_field_v_per_cm);
  r.get(n, "comp_coefficient_v_per_cm_per_v", x.comp_coefficient_v_per_cm_per_v);
  r.get(n, "comp_voltage_v", x.comp_voltage_v);
  if (n["kappa_hz_per_v2_m2"]) {
    r.get_positive(n, "kappa_hz_per_v2_m2", x.kappa);
    kappa_given = true;
  }
  r.get(n, "s_ac_hz_per_v2_m2", x.s_ac);
  try {
    x.validate();
  } catch (const ConfigError& err) {
    r.fail(n, err.what());
  }
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig c;
  c.stark.fields_v_per_cm = arange(0.0, 2.0, 0.01);
  c.stark.shift_fields_v_per_cm = arange(0.0, 0.12, 0.005);
  c.spectrum.offsets_hz = arange(-3e6, 3e6, 50e3);
  c.rabi.durations_s = arange(0.0, 1e-6, 10e-9);
  c.compscan.voltages_v = arange(0.0, 2.9, 0.05);
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  auto config = parse(text.str(), path.string(), path.parent_path());
  config.source = path;
  return config;
}

RunConfig RunConfig::parse(std::string_view text, std::string_view origin, const std::filesystem::path& base_dir) {
  RunConfig c = defaults();
  c.text = std::string(text);
  const Reader r{std::string(origin), base_dir};

  YAML::Node root;
  try {
    root = YAML::Load(c.text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(std::string(origin) + ":" + std::to_string(e.mark.line + 1) + ":" +
                      std::to_string(e.mark.column + 1) + ": " + e.msg);
  }
  if (!root || root.IsNull()) return c;
  r.expect_map(root, "top level",
               {"data", "stark", "geometry", "grid", "fieldmap_dump", "models", "experiment", "calibration", "spectrum",
                "rabi", "compscan", "synth", "fitres"});

  if (const auto n = root["data"]) {
    r.expect_map(n, "data", {"defects", "resonator"});
    if (n["defects"]) c.defects_path = r.path(n["defects"], "defects");
    if (n["resonator"]) c.resonator_path = r.path(n["resonator"], "resonator");
  }
  if (const auto n = root["stark"]) read_stark(r, n, c.stark);
  if (const auto n = root["geometry"]) read_geometry(r, n, c.geometry);
  if (const auto n = root["grid"]) read_grid(r, n, c.grid);
  if (const auto n = root["fieldmap_dump"]) {
    r.expect_map(n, "fieldmap_dump", {"max_abs_x_m", "y_min_m", "y_max_m"});
    r.get_positive(n, "max_abs_x_m", c.dump.max_abs_x_m);
    r.get(n, "y_min_m", c.dump.y_min_m);
    r.get(n, "y_max_m", c.dump.y_max_m);
    if (!(c.dump.y_max_m > c.dump.y_min_m)) r.fail(n, "fieldmap_dump: y_max_m must exceed y_min_m");
  }
  if (const auto n = root["models"]) {
    r.expect_map(n, "models", {"half_frequency_hz", "alpha_lower_ghz", "alpha_upper_ghz"});
    r.get_positive(n, "half_frequency_hz", c.models.half_frequency_hz);
    r.get(n, "alpha_lower_ghz", c.models.alpha_lower_ghz);
    r.get(n, "alpha_upper_ghz", c.models.alpha_upper_ghz);
  }
  if (const auto n = root["experiment"]) read_experiment(r, n, c.experiment, c.kappa_given);
  if (const auto n = root["calibration"]) {
    r.expect_map(n, "calibration", {"auto", "target_rabi_hz", "p_source_w", "t_cpw_k", "x_m", "y_m", "z_m"});
    r.get(n, "auto", c.calibration.auto_calibrate);
    r.get_positive(n, "target_rabi_hz", c.calibration.target_rabi_hz);
    r.get_positive(n, "p_source_w", c.calibration.p_source_w);
    r.get_positive(n, "t_cpw_k", c.calibration.t_cpw_k);
    r.get(n, "x_m", c.calibration.point.x_m);
    r.get_positive(n, "y_m", c.calibration.point.y_m);
    r.get(n, "z_m", c.calibration.point.z_m);
  }
  if (const auto n = root["spectrum"]) {
    r.expect_map(n, "spectrum", {"temperatures_k", "offsets_hz"});
    r.get_sweep(n, "temperatures_k", c.spectrum.temperatures_k);
    r.get_sweep(n, "offsets_hz", c.spectrum.offsets_hz);
    if (c.spectrum.temperatures_k.empty() || c.spectrum.offsets_hz.empty()) r.fail(n, "spectrum: empty sweep");
  }
  if (const auto n = root["rabi"]) {
    r.expect_map(n, "rabi", {"durations_s", "detunings_hz"});
    r.get_sweep(n, "durations_s", c.rabi.durations_s);
    r.get_sweep(n, "detunings_hz", c.rabi.detunings_hz);
    if (c.rabi.durations_s.empty() || c.rabi.detunings_hz.empty()) r.fail(n, "rabi: empty sweep");
    for (std::size_t i = 0; i < c.rabi.durations_s.size(); ++i) {
      if (c.rabi.durations_s[i] < 0.0 || (i > 0 && c.rabi.durations_s[i] < c.rabi.durations_s[i - 1])) {
        r.fail(n["durations_s"], "rabi: durations must be non-negative and ascending");
      }
    }
  }
  if (const auto n = root["compscan"]) {
    r.expect_map(n, "compscan", {"voltages_v", "optimum_v"});
    r.get_sweep(n, "voltages_v", c.compscan.voltages_v);
    if (n["optimum_v"]) r.get_positive(n, "optimum_v", c.compscan.optimum_v);
    if (c.compscan.voltages_v.empty()) r.fail(n, "compscan: empty sweep");
  }
  if (const auto n = root["synth"]) {
    r.expect_map(n, "synth", {"temperatures_k", "span_linewidths", "points", "snr_db", "environment"});
    r.get_sweep(n, "temperatures_k", c.synth.temperatures_k);
    r.get_positive(n, "span_linewidths", c.synth.span_linewidths);
    r.get(n, "points", c.synth.points);
    r.get(n, "snr_db", c.synth.snr_db);
    if (c.synth.points < 16) r.fail(n, "synth: need at least 16 points");
    if (const auto e = n["environment"]) {
      r.expect_map(e, "environment", {"amplitude", "phase_rad", "delay_s"});
      r.get_positive(e, "amplitude", c.synth.environment.amplitude);
      r.get(e, "phase_rad", c.synth.environment.phase_rad);
      r.get(e, "delay_s", c.synth.environment.delay_s);
    }
  }
  if (const auto n = root["fitres"]) {
    r.expect_map(n, "fitres", {"inputs", "window_linewidths", "baseline_linewidths", "min_baseline_points",
                               "max_iterations", "refine"});
    if (const auto in = n["inputs"]) {
      if (in.IsScalar()) {
        c.fitres.inputs = {r.path(in, "inputs")};
      } else if (in.IsSequence()) {
        for (const auto& item : in) c.fitres.inputs.push_back(r.path(item, "inputs"));
      } else {
        r.fail(in, "fitres.inputs must be a path or a list of paths");
      }
    }
    auto& o = c.fitres.options;
    r.get_positive(n, "window_linewidths", o.window_linewidths);
    r.get_positive(n, "baseline_linewidths", o.baseline_linewidths);
    r.get(n, "min_baseline_points", o.min_baseline_points);
    r.get(n, "max_iterations", o.max_iterations);
    r.get(n, "refine", o.refine);
  }
  return c;
}

std::filesystem::path data_directory() {
  if (const char* env = std::getenv("RYDCPW_DATA_DIR"); env != nullptr && *env != '\0') return env;
  const fs::path source(RYDCPW_SOURCE_DATA_DIR);
  if (fs::exists(source / "he_triplet_defects.txt")) return source;
  return RYDCPW_DEFAULT_DATA_DIR;
}

atoms::DefectTable load_defects(const RunConfig& config) {
  const auto path = config.defects_path.empty() ? data_directory() / "he_triplet_defects.txt" : config.defects_path;
  return atoms::DefectTable::load(path);
}

resonator::ResonatorParams load_resonator(const RunConfig& config) {
  const auto path = config.resonator_path.empty() ? data_directory() / "resonator_table1.txt" : config.resonator_path;
  return resonator::ResonatorParams::load(path);
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t state) {
  for (const unsigned char c : bytes) {
    state ^= c;
    state *= 0x100000001b3ULL;
  }
  return state;
}

std::string manifest_hash(std::string_view command, std::string_view config_text, std::uint64_t seed,
                          const std::map<std::string, std::string>& versions) {
  // Length-prefixed fields keep the concatenation unambiguous.
  auto feed = [](std::uint64_t h, std::string_view s) {
    return fnv1a(s, fnv1a(std::to_string(s.size()) + ":", h));
  };
  std::uint64_t h = fnv1a("");
  h = feed(h, command);
  h = feed(h, config_text);
  h = feed(h, std::to_string(seed));
  for (const auto& [k, v] : versions) h = feed(feed(h, k), v);
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["config_path"] = config_path;
  j["seed"] = seed;
  j["outputs"] = outputs;
  j["versions"] = versions;
  j["hash"] = hash;
  return j.dump(2) + "\n";
}

}  // namespace rydcpw::config
