#pragma once

#include <complex>
#include <functional>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "rydcpw/fieldmap.hpp"
#include "rydcpw/resonator.hpp"

namespace rydcpw::dynamics {

// Frequency convention: all rates are linear frequencies (Hz). In the
// rotating frame the Hamiltonian is H/h = (Omega sigma_x - delta sigma_z)/2,
// so for constant Omega and delta
//   P_upper(t) = Omega^2 / W^2 sin^2(pi W t),  W = sqrt(Omega^2 + delta^2).
// A resonant pi pulse lasts 1/(2 Omega); populations oscillate at W.

/// Static models shared by every simulation: the resonator, the solved
/// cross-section, and the two-photon reference frequency and Stark
/// coefficients of the lower/upper level.
struct SharedModels {
  resonator::ResonatorParams resonator = resonator::default_params();
  fieldmap::CrossSectionField cross;
  double half_frequency_hz = 19.556499e9;
  double alpha_lower_ghz = 1.95545;  // GHz/(V/cm)^2
  double alpha_upper_ghz = 2.20211;
};

struct ExperimentConfig {
  double drive_frequency_hz = 19.556499e9;
  double p_source_w = 2e-3;
  double attenuation_db = -22.5;
  double pulse_duration_s = 500e-9;
  double pulse_start_s = 13.25e-6;  // after photoexcitation
  /// Time after photoexcitation at which the bunch center is above the
  /// first antinode (z = L/3).
  double antinode_time_s = 13.25e-6;
  double t_cpw_k = 3.65;
  double beam_velocity_m_s = 2000.0;
  bool atom_motion = true;  // false freezes atoms at their antinode-time positions
  fieldmap::EnsembleSpec ensemble;
  double stray_field_v_per_cm = 0.0;
  double comp_coefficient_v_per_cm_per_v = 0.0;
  double comp_voltage_v = 0.0;
  /// Two-photon coupling Omega = kappa E^2, Hz per (V/m)^2. NaN = uncalibrated.
  double kappa = std::numeric_limits<double>::quiet_NaN();
  /// ac Stark coefficient, Hz per (V/m)^2 added to the two-photon detuning.
  double s_ac = 0.0;

  void validate() const;

  /// |stray - coefficient * V| in V/cm.
  double net_static_field() const;
};

/// Closed two-level state; amplitudes of |lower> and |upper>.
struct TwoLevelState {
  std::complex<double> lower{1.0, 0.0};
  std::complex<double> upper{0.0, 0.0};

  double p_lower() const { return std::norm(lower); }
  double p_upper() const { return std::norm(upper); }
  std::complex<double> coherence() const { return lower * std::conj(upper); }
};

/// Exact propagator for constant Omega, delta over dt.
TwoLevelState propagate(const TwoLevelState& state, double omega_hz, double delta_hz, double dt_s);
/// One fourth-order Magnus step from drive samples at the Gauss-Legendre
/// nodes (1/2 -+ sqrt(3)/6) dt.
TwoLevelState magnus_step(const TwoLevelState& state, double omega1, double delta1, double omega2, double delta2,
                          double dt_s);

/// Piecewise-constant drive: sample k holds on [k, k+1) * duration / N.
/// Starts from |lower>.
TwoLevelState evolve_two_level(std::span<const double> omega_hz, std::span<const double> delta_hz,
                               double duration_s);

/// Continuous drive, fourth-order Magnus steps (two Gauss-Legendre samples
/// per step, each step an exact SU(2) rotation). `rate_bound_hz` bounds
/// max(|Omega|, |delta|) over the interval; the step is at most
/// step_fraction / rate_bound.
TwoLevelState evolve_two_level(const std::function<double(double)>& omega_hz,
                               const std::function<double(double)>& delta_hz, double duration_s,
                               double rate_bound_hz, double step_fraction = 1.0 / 50.0);

/// Number of steps used for an interval of `duration_s` at `rate_bound_hz`.
std::size_t step_count(double duration_s, double rate_bound_hz, double step_fraction = 1.0 / 50.0);

/// Antinode voltage scale sqrt(P_chip L(f) * 1 ohm); the absolute scale is
/// absorbed by kappa.
double antinode_voltage(const ExperimentConfig& config, const SharedModels& models);

/// Two-photon detuning drive - transition, in Hz:
///   2 (f - nu/2) - 2 shift(F_net) + s_ac E^2.
/// The static Stark shift lowers the transition (shift <= 0), so the line
/// centroid sits at nu/2 + shift.
double effective_detuning(const ExperimentConfig& config, const SharedModels& models, double atom_field_v_per_m);

/// kappa E(r)^2 at a static position (z along the resonator from its
/// grounded end). Throws ConfigError when kappa is uncalibrated.
double local_rabi_frequency(const ExperimentConfig& config, const SharedModels& models, double x_m, double y_m,
                            double z_m);

/// Relative microwave amplitude along the beam: |mode_profile(z)| on the
/// straight section [0, aligned_length] and zero elsewhere.
double beam_profile(double z_m, const resonator::ResonatorParams& params);

struct ReferencePoint {
  double x_m = 0.0;
  double y_m = 100e-6;
  double z_m = std::numeric_limits<double>::quiet_NaN();  // NaN: first antinode L/3
};

/// kappa such that the reference atom sees target_rabi_hz.
double calibrate_kappa(double target_rabi_hz, const ExperimentConfig& reference, const SharedModels& models,
                       const ReferencePoint& point = {});

/// Inverts the two-photon Stark shift: F = sqrt(-4 dnu / (alpha_u - alpha_l)).
/// Throws DomainError for a blue-shifted centroid.
double infer_stray_field(double measured_centroid_hz, const SharedModels& models);

/// c + A exp(-gamma t) cos(2 pi f t + phase).
struct DampedSinusoid {
  double offset = 0.0;
  double amplitude = 0.0;
  double decay_rate = 0.0;  // 1/s
  double frequency_hz = 0.0;
  double phase = 0.0;
  double rms_residual = 0.0;

  /// 1/gamma, or +inf for a non-decaying fit.
  double decay_time() const;
  double operator()(double t) const;
};

/// Periodogram start, then Levenberg-Marquardt. Throws NumericalError on
/// fewer than 6 points or non-convergence.
DampedSinusoid fit_damped_sinusoid(std::span<const double> t, std::span<const double> y);

struct SignalCurve {
  std::string axis_name;
  std::vector<double> axis;
  std::vector<double> signal;        // ensemble-averaged P_upper in [0, 1]
  std::vector<std::size_t> samples;  // atoms contributing (above the chip)
  ExperimentConfig config;
  bool has_fit = false;
  DampedSinusoid fit;
  std::string fit_error;  // set when the damped-sinusoid fit failed

  void write_csv(std::ostream& out) const;
};

/// Peak, signal-weighted centroid above half maximum, and interpolated FWHM.
struct LineShape {
  double peak_signal = 0.0;
  double peak_axis = 0.0;
  double centroid = 0.0;
  double fwhm = 0.0;
};
LineShape analyze_line(const SignalCurve& curve);

struct SimulationOptions {
  int threads = 1;
  double step_fraction = 1.0 / 50.0;
};

SignalCurve simulate_spectrum(const ExperimentConfig& config, std::span<const double> frequencies_hz,
                              const SharedModels& models, const SimulationOptions& options = {});

/// Durations must be non-negative and ascending; each atom is propagated
/// once, recording P_upper at every duration. The averaged curve is fitted
/// with a damped sinusoid when it has at least 6 points; a failed fit leaves
/// has_fit false and the reason in fit_error.
SignalCurve simulate_rabi(const ExperimentConfig& config, std::span<const double> durations_s,
                          const SharedModels& models, const SimulationOptions& options = {});

SignalCurve simulate_compensation_scan(const ExperimentConfig& config, std::span<const double> voltages_v,
                                       const SharedModels& models, const SimulationOptions& options = {});

}  // namespace rydcpw::dynamics
