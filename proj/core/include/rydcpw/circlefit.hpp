#pragma once

#include <complex>
#include <span>
#include <string>

#include "rydcpw/error.hpp"
#include "rydcpw/trace.hpp"

namespace rydcpw::circlefit {

/// A pipeline stage failed; `stage()` names it (delay, circle, phase,
/// decomposition).
class StageError : public NumericalError {
 public:
  StageError(std::string stage, const std::string& what)
      : NumericalError("circle fit [" + stage + "]: " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// The trace shows no resolvable resonance dip.
class NoResonanceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

struct FitOptions {
  /// Circle and phase fits use nu_r +- window_linewidths * FWHM.
  double window_linewidths = 5.0;
  /// Points beyond +- baseline_linewidths * FWHM calibrate the delay.
  double baseline_linewidths = 3.0;
  int min_baseline_points = 5;
  int max_iterations = 200;
  /// Joint refinement of all notch parameters against the whole trace.
  bool refine = true;
};

/// Coarse resonance location from the |S21| dip.
struct ResonanceGuess {
  double frequency_hz = 0.0;
  double fwhm_hz = 0.0;
  double depth = 0.0;     // relative to the baseline magnitude
  double baseline = 0.0;  // off-resonant |S21|
};

/// Throws NoResonanceError when the dip is not resolved above the noise.
ResonanceGuess guess_resonance(const ComplexTrace& trace);

struct DelayResult {
  ComplexTrace corrected;
  double delay_s = 0.0;
  double delay_err_s = 0.0;
};

/// Estimates the cable delay from the off-resonant phase slope, then refines
/// it by minimizing the circle-fit residual of the whole trace. The corrected trace has the factor e^{-2 pi i f tau} removed.
DelayResult remove_delay(const ComplexTrace& trace, const FitOptions& options = {});

struct Circle {
  std::complex<double> center;
  double radius = 0.0;
  double center_err = 0.0;  // 1-sigma per coordinate (larger of the two)
  double radius_err = 0.0;
  double rms_residual = 0.0;  // geometric
};

/// Taubin algebraic circle fit. Throws StageError("circle") for fewer than
/// three points or collinear/degenerate data.
Circle fit_circle(std::span<const std::complex<double>> points);
Circle fit_circle(const ComplexTrace& trace);

struct PhaseFit {
  double f_r_hz = 0.0;
  double q_loaded = 0.0;
  double theta0 = 0.0;
  double f_r_err = 0.0;
  double q_loaded_err = 0.0;
  double theta0_err = 0.0;
  double rms_residual = 0.0;  // radians
  int iterations = 0;
};

/// Nonlinear least-squares fit of theta(f) = theta0 + 2 atan(2 Q_l (1 - f/f_r))
/// to the angle of each point about the circle center. Residuals are
/// wrapped to (-pi, pi], so no phase unwrapping of noisy data is needed.
PhaseFit fit_phase(const ComplexTrace& trace, std::complex<double> center, double radius,
                   const FitOptions& options = {});

struct Uncertainties {
  double f_r = 0.0;
  double q_loaded = 0.0;
  double q_int = 0.0;
  double q_c_mag = 0.0;
  double phi = 0.0;
  double delay = 0.0;
};

struct CircleFitResult {
  double f_r_hz = 0.0;
  double q_loaded = 0.0;
  double q_int = 0.0;
  double q_c_mag = 0.0;
  double phi = 0.0;
  double delay_s = 0.0;
  std::complex<double> environment;  // a e^{i alpha}
  Uncertainties uncertainty;
  double residual = 0.0;  // RMS |model - data| over the trace
};

/// delay removal -> circle fit -> phase fit -> Q decomposition with
/// 1/Q_int = 1/Q_loaded - cos(phi)/|Q_c|, followed by a joint complex
/// least-squares refinement of the full notch model (stage "refine") whose
/// covariance supplies the reported uncertainties.
CircleFitResult extract_q(const ComplexTrace& trace, const FitOptions& options = {});

/// Notch model evaluated with fitted parameters (including delay).
std::complex<double> model_s21(const CircleFitResult& fit, double frequency_hz);

}  // namespace rydcpw::circlefit
