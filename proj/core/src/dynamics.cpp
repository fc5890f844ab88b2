#include "rydcpw/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "lsq.hpp"
#include "rydcpw/atoms.hpp"
#include "rydcpw/constants.hpp"
#include "rydcpw/csv.hpp"
#include "rydcpw/error.hpp"
#include "rydcpw/parallel.hpp"

namespace rydcpw::dynamics {

using constants::pi;

namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw ConfigError(std::string("experiment config: ") + what + " must be finite");
}

double first_antinode(const resonator::ResonatorParams& params) {
  return params.length_m / static_cast<double>(params.harmonic_index);
}

// exp(-i w.sigma) applied to the state.
TwoLevelState rotate(const TwoLevelState& state, double wx, double wy, double wz) {
  const double theta = std::sqrt(wx * wx + wy * wy + wz * wz);
  if (theta == 0.0) return state;
  const double c = std::cos(theta);
  const double s = std::sin(theta) / theta;
  const std::complex<double> u00(c, -s * wz);
  const std::complex<double> u01(-s * wy, -s * wx);
  const std::complex<double> u10(s * wy, -s * wx);
  const std::complex<double> u11(c, s * wz);
  TwoLevelState out;
  out.lower = u00 * state.lower + u01 * state.upper;
  out.upper = u10 * state.lower + u11 * state.upper;
  return out;
}

// Two-point Gauss-Legendre nodes on [0, 1].
constexpr double gauss_lo = 0.5 - 0.28867513459481287;
constexpr double gauss_hi = 0.5 + 0.28867513459481287;

// Everything one atom needs during a pulse.
struct AtomDrive {
  double field_sq_max = 0.0;  // E^2 at the antinode for this (x, y)
  double kappa = 0.0;
  double s_ac = 0.0;
  double delta_static = 0.0;
  double z_at_pulse_start = 0.0;
  double velocity = 0.0;
  double rate_bound = 0.0;
  const resonator::ResonatorParams* params = nullptr;

  double field_sq(double t_rel) const {
    const double p = beam_profile(z_at_pulse_start + velocity * t_rel, *params);
    return field_sq_max * p * p;
  }
};

class PulseModel {
 public:
  PulseModel(const ExperimentConfig& config, const SharedModels& models) : config_(config), models_(models) {
    config.validate();
    if (!std::isfinite(config.kappa)) {
      throw ConfigError("dynamics: kappa is not calibrated (set kappa or run calibrate)");
    }
    v_antinode_ = antinode_voltage(config, models);
  }

  /// Returns false for atoms lost to the chip (y <= 0).
  bool drive_for(const fieldmap::AtomPosition& pos, double delta_static, AtomDrive& d) const {
    if (pos.y_m <= 0.0) return false;
    const double e = v_antinode_ * models_.cross.e_mag_at(pos.x_m, pos.y_m);
    d.field_sq_max = e * e;
    d.kappa = config_.kappa;
    d.s_ac = config_.s_ac;
    d.delta_static = delta_static;
    d.params = &models_.resonator;
    d.velocity = config_.atom_motion ? config_.beam_velocity_m_s : 0.0;
    const double shift = config_.atom_motion ? config_.beam_velocity_m_s * (config_.pulse_start_s - config_.antinode_time_s) : 0.0;
    d.z_at_pulse_start = first_antinode(models_.resonator) + pos.z_offset_m + shift;
    d.rate_bound = std::max(std::abs(d.kappa) * d.field_sq_max,
                            std::abs(delta_static) + std::abs(d.s_ac) * d.field_sq_max);
    return true;
  }

  double static_detuning(double drive_hz, double net_field) const {
    return 2.0 * (drive_hz - models_.half_frequency_hz) -
           2.0 * atoms::two_photon_stark_shift(net_field, models_.alpha_lower_ghz, models_.alpha_upper_ghz);
  }

 private:
  const ExperimentConfig& config_;
  const SharedModels& models_;
  double v_antinode_ = 0.0;
};

// P_upper at each checkpoint (pulse-relative times, ascending).
void run_atom(const AtomDrive& d, std::span<const double> checkpoints, double step_fraction, double* out) {
  TwoLevelState state;
  double t = 0.0;
  for (std::size_t k = 0; k < checkpoints.size(); ++k) {
    const double segment = checkpoints[k] - t;
    const std::size_t n = step_count(segment, d.rate_bound, step_fraction);
    if (n > 0) {
      const double dt = segment / static_cast<double>(n);
      for (std::size_t s = 0; s < n; ++s) {
        const double t0 = t + static_cast<double>(s) * dt;
        const double e1 = d.field_sq(t0 + gauss_lo * dt);
        const double e2 = d.field_sq(t0 + gauss_hi * dt);
        state = magnus_step(state, d.kappa * e1, d.delta_static + d.s_ac * e1, d.kappa * e2,
                            d.delta_static + d.s_ac * e2, dt);
      }
    }
    t = checkpoints[k];
    out[k] = state.p_upper();
  }
}

// Runs `points` independent pulses per atom (one checkpoint each) or one
// multi-checkpoint pass; averages over surviving atoms in atom order.
template <typename PerAtom>
void ensemble_average(const ExperimentConfig& config, std::size_t points, int threads, PerAtom&& per_atom,
                      SignalCurve& curve) {
  const auto atoms = fieldmap::sample_ensemble(config.ensemble);
  const std::size_t n_atoms = atoms.size();
  std::vector<double> values(n_atoms * points, 0.0);
  std::vector<char> alive(n_atoms, 0);
  parallel_for(n_atoms, threads, [&](std::size_t i) {
    alive[i] = per_atom(atoms[i], values.data() + i * points) ? 1 : 0;
  });

  std::size_t survivors = 0;
  for (char a : alive) survivors += a != 0;
  if (survivors == 0) throw DomainError("dynamics: no sampled atoms lie above the chip (y > 0)");
  curve.signal.assign(points, 0.0);
  curve.samples.assign(points, survivors);
  std::vector<double> column(survivors);
  for (std::size_t p = 0; p < points; ++p) {
    std::size_t k = 0;
    for (std::size_t i = 0; i < n_atoms; ++i) {
      if (alive[i]) column[k++] = values[i * points + p];
    }
    curve.signal[p] = std::clamp(pairwise_sum(column) / static_cast<double>(survivors), 0.0, 1.0);
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  require_finite(drive_frequency_hz, "drive_frequency_hz");
  require_finite(p_source_w, "p_source_w");
  require_finite(attenuation_db, "attenuation_db");
  require_finite(pulse_start_s, "pulse_start_s");
  require_finite(antinode_time_s, "antinode_time_s");
  require_finite(t_cpw_k, "t_cpw_k");
  require_finite(stray_field_v_per_cm, "stray_field_v_per_cm");
  require_finite(comp_coefficient_v_per_cm_per_v, "comp_coefficient_v_per_cm_per_v");
  require_finite(comp_voltage_v, "comp_voltage_v");
  require_finite(s_ac, "s_ac");
  if (!(pulse_duration_s > 0.0) || !std::isfinite(pulse_duration_s)) {
    throw ConfigError("experiment config: pulse_duration_s must be positive");
  }
  if (!(beam_velocity_m_s > 0.0) || !std::isfinite(beam_velocity_m_s)) {
    throw ConfigError("experiment config: beam_velocity_m_s must be positive");
  }
  if (p_source_w < 0.0) throw ConfigError("experiment config: p_source_w must be non-negative");
  if (comp_coefficient_v_per_cm_per_v < 0.0) {
    throw ConfigError("experiment config: comp_coefficient_v_per_cm_per_v must be non-negative");
  }
  if (!std::isnan(kappa) && !std::isfinite(kappa)) throw ConfigError("experiment config: kappa must be finite");
  ensemble.validate();
}

double ExperimentConfig::net_static_field() const {
  return std::abs(stray_field_v_per_cm - comp_coefficient_v_per_cm_per_v * comp_voltage_v);
}

TwoLevelState propagate(const TwoLevelState& state, double omega_hz, double delta_hz, double dt_s) {
  return rotate(state, pi * dt_s * omega_hz, 0.0, -pi * dt_s * delta_hz);
}

TwoLevelState magnus_step(const TwoLevelState& state, double omega1, double delta1, double omega2, double delta2,
                          double dt_s) {
  const double a = 0.5 * pi * dt_s;
  const double b = std::sqrt(3.0) * pi * pi * dt_s * dt_s / 6.0;
  return rotate(state, a * (omega1 + omega2), -b * (omega1 * delta2 - delta1 * omega2), -a * (delta1 + delta2));
}

TwoLevelState evolve_two_level(std::span<const double> omega_hz, std::span<const double> delta_hz,
                               double duration_s) {
  if (omega_hz.size() != delta_hz.size() || omega_hz.empty()) {
    throw DomainError("evolve_two_level: omega and delta need the same, non-zero number of samples");
  }
  if (!(duration_s >= 0.0) || !std::isfinite(duration_s)) throw DomainError("evolve_two_level: bad duration");
  const double dt = duration_s / static_cast<double>(omega_hz.size());
  TwoLevelState state;
  for (std::size_t k = 0; k < omega_hz.size(); ++k) {
    if (!std::isfinite(omega_hz[k]) || !std::isfinite(delta_hz[k])) {
      throw DomainError("evolve_two_level: non-finite drive sample at index " + std::to_string(k));
    }
    state = propagate(state, omega_hz[k], delta_hz[k], dt);
  }
  return state;
}

std::size_t step_count(double duration_s, double rate_bound_hz, double step_fraction) {
  if (!(duration_s > 0.0)) return 0;
  const double n = std::ceil(duration_s * std::abs(rate_bound_hz) / step_fraction);
  return std::max<std::size_t>(1, static_cast<std::size_t>(n));
}

TwoLevelState evolve_two_level(const std::function<double(double)>& omega_hz,
                               const std::function<double(double)>& delta_hz, double duration_s,
                               double rate_bound_hz, double step_fraction) {
  if (!(duration_s >= 0.0) || !std::isfinite(duration_s) || !std::isfinite(rate_bound_hz)) {
    throw DomainError("evolve_two_level: non-finite duration or rate bound");
  }
  const std::size_t n = step_count(duration_s, rate_bound_hz, step_fraction);
  TwoLevelState state;
  if (n == 0) return state;
  const double dt = duration_s / static_cast<double>(n);
  auto sample = [&](double t, double& om, double& de) {
    om = omega_hz(t);
    de = delta_hz(t);
    if (!std::isfinite(om) || !std::isfinite(de)) {
      throw DomainError("evolve_two_level: non-finite drive at t = " + csv::format_double(t) + " s");
    }
  };
  for (std::size_t k = 0; k < n; ++k) {
    const double t0 = static_cast<double>(k) * dt;
    double om1, de1, om2, de2;
    sample(t0 + gauss_lo * dt, om1, de1);
    sample(t0 + gauss_hi * dt, om2, de2);
    state = magnus_step(state, om1, de1, om2, de2, dt);
  }
  return state;
}

double antinode_voltage(const ExperimentConfig& config, const SharedModels& models) {
  const double p_chip = config.p_source_w * std::pow(10.0, config.attenuation_db / 10.0);
  const double response = resonator::lorentzian_response(config.drive_frequency_hz, config.t_cpw_k, models.resonator);
  return std::sqrt(p_chip * response);
}

double effective_detuning(const ExperimentConfig& config, const SharedModels& models, double atom_field_v_per_m) {
  return 2.0 * (config.drive_frequency_hz - models.half_frequency_hz) -
         2.0 * atoms::two_photon_stark_shift(config.net_static_field(), models.alpha_lower_ghz,
                                             models.alpha_upper_ghz) +
         config.s_ac * atom_field_v_per_m * atom_field_v_per_m;
}

double beam_profile(double z_m, const resonator::ResonatorParams& params) {
  if (z_m < 0.0 || z_m > params.aligned_length_m) return 0.0;
  return std::abs(resonator::mode_profile(z_m, params));
}

double local_rabi_frequency(const ExperimentConfig& config, const SharedModels& models, double x_m, double y_m,
                            double z_m) {
  if (!std::isfinite(config.kappa)) {
    throw ConfigError("dynamics: kappa is not calibrated (set kappa or run calibrate)");
  }
  const double e = fieldmap::field_at(x_m, y_m, z_m, models.cross, models.resonator,
                                      antinode_voltage(config, models));
  return config.kappa * e * e;
}

double calibrate_kappa(double target_rabi_hz, const ExperimentConfig& reference, const SharedModels& models,
                       const ReferencePoint& point) {
  if (!(target_rabi_hz > 0.0)) throw DomainError("calibrate_kappa: target Rabi frequency must be positive");
  reference.validate();
  const double z = std::isnan(point.z_m) ? first_antinode(models.resonator) : point.z_m;
  if (std::abs(resonator::mode_profile(z, models.resonator)) < 1e-9) {
    throw DomainError("calibrate_kappa: reference point z = " + csv::format_double(z) + " m sits on a field node");
  }
  const double e = fieldmap::field_at(point.x_m, point.y_m, z, models.cross, models.resonator,
                                      antinode_voltage(reference, models));
  if (!(e > 0.0)) throw DomainError("calibrate_kappa: zero microwave field at the reference point");
  return target_rabi_hz / (e * e);
}

double infer_stray_field(double measured_centroid_hz, const SharedModels& models) {
  const double shift = measured_centroid_hz - models.half_frequency_hz;
  if (shift > 0.0) {
    throw DomainError("infer_stray_field: centroid lies above nu/2; a quadratic Stark shift cannot explain a blue shift");
  }
  const double d_alpha = (models.alpha_upper_ghz - models.alpha_lower_ghz) * 1e9;
  if (!(d_alpha > 0.0)) throw DomainError("infer_stray_field: needs alpha_upper > alpha_lower");
  return std::sqrt(-4.0 * shift / d_alpha);
}

double DampedSinusoid::decay_time() const {
  return decay_rate > 0.0 ? 1.0 / decay_rate : std::numeric_limits<double>::infinity();
}

double DampedSinusoid::operator()(double t) const {
  return offset + amplitude * std::exp(-decay_rate * t) * std::cos(2.0 * pi * frequency_hz * t + phase);
}

DampedSinusoid fit_damped_sinusoid(std::span<const double> t, std::span<const double> y) {
  const std::size_t n = t.size();
  if (n != y.size() || n < 6) throw NumericalError("damped-sinusoid fit: need at least 6 (t, y) points");
  // Work in microseconds and MHz for conditioning.
  std::vector<double> tu(n);
  for (std::size_t i = 0; i < n; ++i) tu[i] = t[i] * 1e6;
  const double span = tu.back() - tu.front();
  if (!(span > 0.0)) throw NumericalError("damped-sinusoid fit: zero time span");
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(n);

  const double nyquist = 0.5 * static_cast<double>(n - 1) / span;
  const double f_min = 0.5 / span;
  double best_f = f_min;
  double best_power = -1.0;
  std::complex<double> best_sum;
  const int grid = 4000;
  for (int k = 0; k <= grid; ++k) {
    const double f = f_min + (nyquist - f_min) * k / grid;
    std::complex<double> sum;
    for (std::size_t i = 0; i < n; ++i) sum += (y[i] - mean) * std::polar(1.0, -2.0 * pi * f * tu[i]);
    if (std::norm(sum) > best_power) {
      best_power = std::norm(sum);
      best_f = f;
      best_sum = sum;
    }
  }

  auto model = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
    for (std::size_t i = 0; i < n; ++i) {
      const double env = std::exp(-p(2) * tu[i]);
      const double arg = 2.0 * pi * p(3) * tu[i] + p(4);
      const double c = std::cos(arg);
      const double s = std::sin(arg);
      const auto row = static_cast<Eigen::Index>(i);
      r(row) = p(0) + p(1) * env * c - y[i];
      if (jac != nullptr) {
        (*jac)(row, 0) = 1.0;
        (*jac)(row, 1) = env * c;
        (*jac)(row, 2) = -tu[i] * p(1) * env * c;
        (*jac)(row, 3) = -p(1) * env * s * 2.0 * pi * tu[i];
        (*jac)(row, 4) = -p(1) * env * s;
      }
    }
  };
  Eigen::VectorXd start(5);
  start << mean, 2.0 * std::sqrt(best_power) / static_cast<double>(n), 0.5 / span, best_f, std::arg(best_sum);
  const auto fit = detail::least_squares(start, static_cast<int>(n), model, 400);
  if (!fit.converged) throw NumericalError("damped-sinusoid fit: no convergence");

  DampedSinusoid out;
  out.offset = fit.params(0);
  out.amplitude = fit.params(1);
  out.decay_rate = fit.params(2) * 1e6;
  out.frequency_hz = fit.params(3) * 1e6;
  out.phase = fit.params(4);
  if (out.amplitude < 0.0) {
    out.amplitude = -out.amplitude;
    out.phase += pi;
  }
  if (out.frequency_hz < 0.0) {
    out.frequency_hz = -out.frequency_hz;
    out.phase = -out.phase;
  }
  out.phase = std::remainder(out.phase, 2.0 * pi);
  out.rms_residual = fit.rms;
  return out;
}

void SignalCurve::write_csv(std::ostream& out) const {
  out << axis_name << ",signal,samples\n";
  for (std::size_t i = 0; i < axis.size(); ++i) {
    out << csv::format_double(axis[i]) << ',' << csv::format_double(signal[i]) << ',' << samples[i] << '\n';
  }
}

LineShape analyze_line(const SignalCurve& curve) {
  const auto& a = curve.axis;
  const auto& s = curve.signal;
  if (a.size() < 3 || a.size() != s.size()) throw NumericalError("line analysis: need at least 3 points");
  const std::size_t ip = static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
  LineShape out;
  out.peak_signal = s[ip];
  out.peak_axis = a[ip];
  if (!(out.peak_signal > 0.0)) return out;
  const double half = 0.5 * out.peak_signal;
  std::size_t lo = ip;
  while (lo > 0 && s[lo - 1] >= half) --lo;
  std::size_t hi = ip;
  while (hi + 1 < s.size() && s[hi + 1] >= half) ++hi;
  double num = 0.0, den = 0.0;
  for (std::size_t i = lo; i <= hi; ++i) {
    num += a[i] * s[i];
    den += s[i];
  }
  out.centroid = num / den;
  auto cross = [&](std::size_t inside, std::size_t outside) {
    return a[inside] + (a[outside] - a[inside]) * (s[inside] - half) / (s[inside] - s[outside]);
  };
  const double left = lo > 0 ? cross(lo, lo - 1) : a.front();
  const double right = hi + 1 < s.size() ? cross(hi, hi + 1) : a.back();
  out.fwhm = right - left;
  return out;
}

SignalCurve simulate_spectrum(const ExperimentConfig& config, std::span<const double> frequencies_hz,
                              const SharedModels& models, const SimulationOptions& options) {
  if (frequencies_hz.empty()) throw DomainError("simulate_spectrum: empty frequency grid");
  SignalCurve curve;
  curve.axis_name = "drive_frequency_hz";
  curve.axis.assign(frequencies_hz.begin(), frequencies_hz.end());
  curve.config = config;

  // Each frequency point has its own drive strength through the cavity filter.
  std::vector<ExperimentConfig> configs(frequencies_hz.size(), config);
  std::vector<PulseModel> pulses;
  pulses.reserve(configs.size());
  for (std::size_t p = 0; p < configs.size(); ++p) {
    configs[p].drive_frequency_hz = frequencies_hz[p];
    pulses.emplace_back(configs[p], models);
  }
  const double checkpoint[] = {config.pulse_duration_s};
  const double net = config.net_static_field();
  ensemble_average(config, frequencies_hz.size(), options.threads,
                   [&](const fieldmap::AtomPosition& pos, double* out) {
                     for (std::size_t p = 0; p < pulses.size(); ++p) {
                       AtomDrive d;
                       if (!pulses[p].drive_for(pos, pulses[p].static_detuning(frequencies_hz[p], net), d)) {
                         return false;
                       }
                       run_atom(d, checkpoint, options.step_fraction, out + p);
                     }
                     return true;
                   },
                   curve);
  return curve;
}

SignalCurve simulate_rabi(const ExperimentConfig& config, std::span<const double> durations_s,
                          const SharedModels& models, const SimulationOptions& options) {
  if (durations_s.empty()) throw DomainError("simulate_rabi: empty duration grid");
  for (std::size_t i = 0; i < durations_s.size(); ++i) {
    if (!(durations_s[i] >= 0.0) || (i > 0 && durations_s[i] < durations_s[i - 1])) {
      throw DomainError("simulate_rabi: durations must be non-negative and ascending");
    }
  }
  SignalCurve curve;
  curve.axis_name = "pulse_duration_s";
  curve.axis.assign(durations_s.begin(), durations_s.end());
  curve.config = config;

  const PulseModel pulse(config, models);
  const double delta = pulse.static_detuning(config.drive_frequency_hz, config.net_static_field());
  ensemble_average(config, durations_s.size(), options.threads,
                   [&](const fieldmap::AtomPosition& pos, double* out) {
                     AtomDrive d;
                     if (!pulse.drive_for(pos, delta, d)) return false;
                     run_atom(d, durations_s, options.step_fraction, out);
                     return true;
                   },
                   curve);
  if (curve.axis.size() >= 6) {
    try {
      curve.fit = fit_damped_sinusoid(curve.axis, curve.signal);
      curve.has_fit = true;
    } catch (const NumericalError& e) {
      curve.fit_error = e.what();
    }
  }
  return curve;
}

SignalCurve simulate_compensation_scan(const ExperimentConfig& config, std::span<const double> voltages_v,
                                       const SharedModels& models, const SimulationOptions& options) {
  if (voltages_v.empty()) throw DomainError("simulate_compensation_scan: empty voltage grid");
  if (!(config.comp_coefficient_v_per_cm_per_v > 0.0)) {
    throw ConfigError("simulate_compensation_scan: comp_coefficient_v_per_cm_per_v must be positive");
  }
  SignalCurve curve;
  curve.axis_name = "comp_voltage_v";
  curve.axis.assign(voltages_v.begin(), voltages_v.end());
  curve.config = config;

  const PulseModel pulse(config, models);
  std::vector<double> deltas(voltages_v.size());
  for (std::size_t p = 0; p < voltages_v.size(); ++p) {
    ExperimentConfig c = config;
    c.comp_voltage_v = voltages_v[p];
    deltas[p] = pulse.static_detuning(config.drive_frequency_hz, c.net_static_field());
  }
  const double checkpoint[] = {config.pulse_duration_s};
  ensemble_average(config, voltages_v.size(), options.threads,
                   [&](const fieldmap::AtomPosition& pos, double* out) {
                     for (std::size_t p = 0; p < deltas.size(); ++p) {
                       AtomDrive d;
                       if (!pulse.drive_for(pos, deltas[p], d)) return false;
                       run_atom(d, checkpoint, options.step_fraction, out + p);
                     }
                     return true;
                   },
                   curve);
  return curve;
}

}  // namespace rydcpw::dynamics
