#include "rydcpw/resonator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

// Boost 1.74's pchip calls isnan unqualified.
namespace boost::math::interpolators {
using std::isnan;
}
#include <boost/math/interpolators/pchip.hpp>

#include "keyvalue.hpp"
#include "rydcpw/constants.hpp"
#include "rydcpw/error.hpp"
#include "rydcpw/random.hpp"

namespace rydcpw::resonator {

using constants::pi;

ResonatorParams ResonatorParams::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open resonator table " + path.string());
  return parse(in, path.string());
}

ResonatorParams ResonatorParams::parse(std::istream& in, std::string_view origin) {
  ResonatorParams p;
  p.temp_table.clear();
  bool have_format = false;
  for (const auto& kv : detail::read_key_values(in, origin)) {
    auto number = [&] { return detail::parse_double(kv.value, origin, kv.line); };
    if (kv.key == "format") {
      if (kv.value != "rydcpw-resonator") {
        throw ConfigError(detail::where(origin, kv.line) + ": unsupported format '" + kv.value + "'");
      }
      have_format = true;
    } else if (kv.key == "version") {
      p.version = kv.value;
    } else if (kv.key == "length_m") {
      p.length_m = number();
    } else if (kv.key == "aligned_length_m") {
      p.aligned_length_m = number();
    } else if (kv.key == "harmonic_index") {
      p.harmonic_index = detail::parse_int(kv.value, origin, kv.line);
    } else if (kv.key == "critical_temperature_k") {
      p.critical_temperature_k = number();
    } else if (kv.key == "center_width_m") {
      p.center_width_m = number();
    } else if (kv.key == "gap_width_m") {
      p.gap_width_m = number();
    } else if (kv.key == "coupling_phase_rad") {
      p.coupling_phase_rad = number();
    } else if (kv.key == "row") {
      const auto v = detail::parse_doubles(kv.value, origin, kv.line);
      if (v.size() != 6) {
        throw ConfigError(detail::where(origin, kv.line) +
                          ": row needs temperature_k nu3_hz q_int q_int_err q_loaded q_loaded_err");
      }
      p.temp_table.push_back({v[0], v[1], v[2], v[3], v[4], v[5]});
    } else {
      throw ConfigError(detail::where(origin, kv.line) + ": unknown key '" + kv.key + "'");
    }
  }
  if (!have_format) throw ConfigError(std::string(origin) + ": missing 'format = rydcpw-resonator'");
  p.validate();
  return p;
}

void ResonatorParams::validate() const {
  if (temp_table.empty()) throw ConfigError("resonator: empty temperature table");
  if (!(length_m > 0.0)) throw ConfigError("resonator: length must be positive");
  if (!(aligned_length_m > 0.0) || aligned_length_m > length_m) {
    throw ConfigError("resonator: aligned length must lie in (0, length]");
  }
  if (harmonic_index < 1 || harmonic_index % 2 == 0) {
    throw ConfigError("resonator: a quarter-wave resonator supports odd harmonics only");
  }
  if (!(center_width_m > 0.0) || !(gap_width_m > 0.0)) throw ConfigError("resonator: CPW widths must be positive");
  if (!(critical_temperature_k > 0.0)) throw ConfigError("resonator: critical temperature must be positive");
  if (std::abs(coupling_phase_rad) >= pi / 2) throw ConfigError("resonator: |coupling phase| must be below pi/2");
  for (std::size_t i = 0; i < temp_table.size(); ++i) {
    const auto& r = temp_table[i];
    if (!(r.nu3_hz > 0.0) || !(r.q_loaded > 0.0) || !(r.q_int > 0.0)) {
      throw ConfigError("resonator: non-positive entry in temperature table");
    }
    if (!(r.q_loaded < r.q_int)) {
      throw ConfigError("resonator: Q_loaded must be below Q_int (T=" + std::to_string(r.temperature_k) + " K)");
    }
    if (r.temperature_k >= critical_temperature_k) throw ConfigError("resonator: table row above T_c");
    if (i > 0) {
      if (!(r.temperature_k > temp_table[i - 1].temperature_k)) throw ConfigError("resonator: temperatures must ascend");
      if (!(r.nu3_hz < temp_table[i - 1].nu3_hz)) throw ConfigError("resonator: nu3 must decrease with temperature");
    }
  }
}

TemperatureRow ResonatorParams::at(double temperature_k) const {
  if (!(temperature_k >= min_temperature() && temperature_k <= max_temperature())) {
    throw DomainError("resonator: T=" + std::to_string(temperature_k) + " K outside table range [" +
                      std::to_string(min_temperature()) + ", " + std::to_string(max_temperature()) + "] K");
  }
  for (const auto& r : temp_table) {
    if (r.temperature_k == temperature_k) return r;
  }
  const auto upper = std::upper_bound(temp_table.begin(), temp_table.end(), temperature_k,
                                      [](double t, const TemperatureRow& r) { return t < r.temperature_k; });
  const auto& hi = *upper;
  const auto& lo = *(upper - 1);
  const double w = (temperature_k - lo.temperature_k) / (hi.temperature_k - lo.temperature_k);
  auto lerp = [w](double a, double b) { return a + w * (b - a); };

  TemperatureRow row;
  row.temperature_k = temperature_k;
  row.q_int = lerp(lo.q_int, hi.q_int);
  row.q_int_err = lerp(lo.q_int_err, hi.q_int_err);
  row.q_loaded = lerp(lo.q_loaded, hi.q_loaded);
  row.q_loaded_err = lerp(lo.q_loaded_err, hi.q_loaded_err);
  if (temp_table.size() >= 4) {
    std::vector<double> t, nu;
    for (const auto& r : temp_table) {
      t.push_back(r.temperature_k);
      nu.push_back(r.nu3_hz);
    }
    const boost::math::interpolators::pchip<std::vector<double>> spline(std::move(t), std::move(nu));
    row.nu3_hz = spline(temperature_k);
  } else {
    row.nu3_hz = lerp(lo.nu3_hz, hi.nu3_hz);
  }
  return row;
}

double ResonatorParams::coupling_q(double temperature_k) const {
  const auto r = at(temperature_k);
  return std::cos(coupling_phase_rad) / (1.0 / r.q_loaded - 1.0 / r.q_int);
}

double ResonatorParams::coupling_q_err(double temperature_k) const {
  const auto r = at(temperature_k);
  const double inv = 1.0 / r.q_loaded - 1.0 / r.q_int;
  const double d_inv = std::hypot(r.q_loaded_err / (r.q_loaded * r.q_loaded), r.q_int_err / (r.q_int * r.q_int));
  return std::cos(coupling_phase_rad) * d_inv / (inv * inv);
}

double ResonatorParams::phase_velocity() const {
  return 4.0 * length_m * temp_table.front().nu3_hz / harmonic_index;
}

ResonatorParams default_params() {
  ResonatorParams p;
  p.version = "nbn-cpw-table1-1";
  p.temp_table = {
      {3.65, 19.55941e9, 2900, 135, 2280, 90},
      {3.90, 19.55111e9, 2635, 130, 2140, 90},
      {4.10, 19.54261e9, 2650, 110, 2200, 80},
      {4.30, 19.53399e9, 2720, 115, 2390, 90},
  };
  p.validate();
  return p;
}

double mode_frequency(double temperature_k, const ResonatorParams& params) {
  return params.at(temperature_k).nu3_hz;
}

double lorentzian_response(double drive_hz, double temperature_k, const ResonatorParams& params) {
  const auto r = params.at(temperature_k);
  const double x = 2.0 * r.q_loaded * (drive_hz / r.nu3_hz - 1.0);
  return 1.0 / (1.0 + x * x);
}

double ringdown_time(double temperature_k, const ResonatorParams& params) {
  const auto r = params.at(temperature_k);
  return r.q_loaded / (2.0 * pi * r.nu3_hz);
}

double mode_profile(double z_m, const ResonatorParams& params) {
  if (!(z_m >= 0.0 && z_m <= params.length_m)) {
    throw DomainError("mode_profile: z=" + std::to_string(z_m) + " m outside [0, L]");
  }
  return std::sin(params.harmonic_index * pi * z_m / (2.0 * params.length_m));
}

double photon_number(double p_source_w, double attenuation_db, double temperature_k,
                     const ResonatorParams& params, double drive_hz) {
  if (p_source_w < 0.0) throw DomainError("photon_number: source power must be non-negative");
  const auto r = params.at(temperature_k);
  const double p_chip = p_source_w * std::pow(10.0, attenuation_db / 10.0);
  const double efficiency = r.q_loaded / params.coupling_q(temperature_k);
  const double tau = ringdown_time(temperature_k, params);
  return p_chip * efficiency * lorentzian_response(drive_hz, temperature_k, params) * tau /
         (constants::planck * r.nu3_hz);
}

double KineticInductanceModel::frequency(double temperature_k) const {
  const double t = temperature_k / critical_temperature_k;
  if (!(t >= 0.0 && t < 1.0)) throw DomainError("kinetic inductance model: require 0 <= T < Tc");
  return nu0_hz / std::sqrt(1.0 + gamma / (1.0 - t * t * t * t));
}

KineticInductanceModel fit_kinetic_inductance(const ResonatorParams& params) {
  // 1/nu^2 = (1/nu0^2) + (gamma/nu0^2) g(T) with g = 1/(1 - (T/Tc)^4): linear in g.
  const auto& table = params.temp_table;
  if (table.size() < 2) throw DomainError("kinetic inductance fit: need at least two rows");
  double sg = 0, sy = 0, sgg = 0, sgy = 0;
  const double n = static_cast<double>(table.size());
  for (const auto& r : table) {
    const double t = r.temperature_k / params.critical_temperature_k;
    const double g = 1.0 / (1.0 - t * t * t * t);
    const double y = 1.0 / (r.nu3_hz * r.nu3_hz);
    sg += g;
    sy += y;
    sgg += g * g;
    sgy += g * y;
  }
  const double det = n * sgg - sg * sg;
  if (!(std::abs(det) > 0.0)) throw NumericalError("kinetic inductance fit: degenerate temperatures");
  const double slope = (n * sgy - sg * sy) / det;
  const double intercept = (sy - slope * sg) / n;
  if (!(intercept > 0.0)) throw NumericalError("kinetic inductance fit: non-physical intercept");
  KineticInductanceModel model;
  model.nu0_hz = 1.0 / std::sqrt(intercept);
  model.gamma = slope / intercept;
  model.critical_temperature_k = params.critical_temperature_k;
  return model;
}

ComplexTrace synth_s21(const ResonatorParams& params, double temperature_k,
                       std::span<const double> grid, const Environment& env,
                       const std::optional<NoiseSpec>& noise) {
  const auto r = params.at(temperature_k);
  if (!(r.q_loaded < r.q_int)) throw ConfigError("synth_s21: Q_loaded must be below Q_int");
  const double qc = params.coupling_q(temperature_k);
  const std::complex<double> coupling = (r.q_loaded / qc) * std::polar(1.0, params.coupling_phase_rad);
  const std::complex<double> baseline = std::polar(env.amplitude, env.phase_rad);
  const std::complex<double> i(0.0, 1.0);

  ComplexTrace trace;
  trace.frequency_hz.assign(grid.begin(), grid.end());
  trace.s21.resize(grid.size());
  trace.metadata.temperature_k = temperature_k;
  trace.metadata.delay_s = env.delay_s;

  const double sigma = noise ? env.amplitude * std::pow(10.0, -noise->snr_db / 20.0) / std::sqrt(2.0) : 0.0;
  const CounterRng rng(noise ? noise->seed : 0, 0x5321);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double f = grid[k];
    const std::complex<double> resonance = coupling / (1.0 + 2.0 * i * r.q_loaded * (f / r.nu3_hz - 1.0));
    std::complex<double> s = baseline * std::polar(1.0, -2.0 * pi * f * env.delay_s) * (1.0 - resonance);
    if (noise) {
      const auto [gx, gy] = rng.normal_pair(k);
      s += std::complex<double>(sigma * gx, sigma * gy);
    }
    trace.s21[k] = s;
  }
  trace.validate();
  return trace;
}

std::vector<double> linewidth_grid(const ResonatorParams& params, double temperature_k,
                                   double span_linewidths, std::size_t points) {
  if (points < 2) throw DomainError("linewidth_grid: need at least two points");
  const auto r = params.at(temperature_k);
  const double half = span_linewidths * r.nu3_hz / r.q_loaded;
  std::vector<double> grid(points);
  for (std::size_t k = 0; k < points; ++k) {
    grid[k] = r.nu3_hz - half + 2.0 * half * static_cast<double>(k) / static_cast<double>(points - 1);
  }
  return grid;
}

}  // namespace rydcpw::resonator
