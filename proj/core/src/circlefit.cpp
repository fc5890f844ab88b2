#include "rydcpw/circlefit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <boost/math/tools/minima.hpp>

#include "lsq.hpp"
#include "rydcpw/constants.hpp"

namespace rydcpw::circlefit {

using constants::pi;
using cplx = std::complex<double>;

namespace {

double wrap(double angle) { return std::remainder(angle, 2.0 * pi); }

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

template <typename T>
std::vector<T> moving_average(const std::vector<T>& v, std::size_t width) {
  if (width <= 1) return v;
  std::vector<T> out(v.size());
  const std::size_t half = width / 2;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(v.size() - 1, i + half);
    T sum{};
    for (std::size_t k = lo; k <= hi; ++k) sum += v[k];
    out[i] = sum / static_cast<double>(hi - lo + 1);
  }
  return out;
}

ComplexTrace select_window(const ComplexTrace& trace, double lo, double hi) {
  ComplexTrace out;
  out.metadata = trace.metadata;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (trace.frequency_hz[i] >= lo && trace.frequency_hz[i] <= hi) {
      out.frequency_hz.push_back(trace.frequency_hz[i]);
      out.s21.push_back(trace.s21[i]);
    }
  }
  return out;
}

ComplexTrace apply_delay(const ComplexTrace& trace, double delay_s) {
  ComplexTrace out = trace;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.s21[i] *= std::polar(1.0, 2.0 * pi * out.frequency_hz[i] * delay_s);
  }
  return out;
}

double circle_sum_squares(const ComplexTrace& window, double delay_s) {
  std::vector<cplx> pts(window.size());
  for (std::size_t i = 0; i < window.size(); ++i) {
    pts[i] = window.s21[i] * std::polar(1.0, 2.0 * pi * window.frequency_hz[i] * delay_s);
  }
  const Circle c = fit_circle(pts);
  double ss = 0.0;
  for (const auto& p : pts) {
    const double d = std::abs(p - c.center) - c.radius;
    ss += d * d;
  }
  return ss;
}


// Joint complex least squares of the full notch model
//   A e^{-2 pi i (f - f_c) tau} [1 - d e^{i phi} / (1 + 2 i Q_l (f/f_r - 1))]
// with A = a e^{i alpha} e^{-2 pi i f_c tau} absorbing the carrier phase.
// Parameters: Re A, Im A, tau [ns], (f_r - f_r0)/lw0, log Q_l, d, phi.
CircleFitResult refine_notch(const ComplexTrace& trace, const CircleFitResult& start, const FitOptions& options) {
  const std::size_t n = trace.size();
  const double fc = 0.5 * (trace.frequency_hz.front() + trace.frequency_hz.back());
  const double fr0 = start.f_r_hz;
  const double lw0 = start.f_r_hz / start.q_loaded;
  const cplx i1(0.0, 1.0);
  const cplx a0 = start.environment * std::polar(1.0, -2.0 * pi * fc * start.delay_s);

  auto model = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
    const cplx amp(p(0), p(1));
    const double tau = p(2) * 1e-9;
    const double fr = fr0 + p(3) * lw0;
    const double ql = std::exp(p(4));
    const double d = p(5);
    const cplx rot = std::polar(1.0, p(6));
    for (std::size_t k = 0; k < n; ++k) {
      const double f = trace.frequency_hz[k];
      const double x = f / fr - 1.0;
      const cplx denom = 1.0 + 2.0 * i1 * ql * x;
      const cplx res = d * rot / denom;
      const cplx e = std::polar(1.0, -2.0 * pi * (f - fc) * tau);
      const cplx base = e * (1.0 - res);
      const cplx s = amp * base;
      const cplx diff = s - trace.s21[k];
      const auto row = static_cast<Eigen::Index>(2 * k);
      r(row) = diff.real();
      r(row + 1) = diff.imag();
      if (jac != nullptr) {
        const cplx ae = amp * e;
        const cplx g[7] = {
            base,
            i1 * base,
            -2.0 * pi * i1 * (f - fc) * 1e-9 * s,
            -ae * res * 2.0 * i1 * ql * f / (fr * fr * denom) * lw0,
            ae * res * 2.0 * i1 * x / denom * ql,
            -ae * rot / denom,
            -ae * i1 * res,
        };
        for (int c = 0; c < 7; ++c) {
          (*jac)(row, c) = g[c].real();
          (*jac)(row + 1, c) = g[c].imag();
        }
      }
    }
  };

  Eigen::VectorXd p(7);
  p << a0.real(), a0.imag(), start.delay_s * 1e9, 0.0, std::log(start.q_loaded), start.q_loaded / start.q_c_mag,
      start.phi;
  const auto fit = detail::least_squares(p, static_cast<int>(2 * n), model, options.max_iterations);
  if (!fit.converged || !fit.params.allFinite()) {
    throw StageError("refine", "joint notch fit did not converge after " + std::to_string(fit.iterations) +
                                   " iterations");
  }
  const auto& q = fit.params;
  const auto& cov = fit.covariance;
  const double ql = std::exp(q(4));
  const double d = q(5);
  const double phi = std::remainder(q(6), 2.0 * pi);
  const double denom = 1.0 - d * std::cos(phi);
  if (!(d > 0.0) || !(denom > 0.0)) throw StageError("refine", "non-physical notch parameters");

  CircleFitResult out = start;
  out.f_r_hz = fr0 + q(3) * lw0;
  out.q_loaded = ql;
  out.q_c_mag = ql / d;
  out.phi = phi;
  out.q_int = ql / denom;
  out.delay_s = q(2) * 1e-9;
  out.environment = cplx(q(0), q(1)) * std::polar(1.0, 2.0 * pi * fc * out.delay_s);

  auto variance = [&](const Eigen::VectorXd& grad) { return std::sqrt(std::max(0.0, grad.dot(cov * grad))); };
  Eigen::VectorXd g = Eigen::VectorXd::Zero(7);
  g(3) = lw0;
  out.uncertainty.f_r = variance(g);
  g.setZero();
  g(4) = ql;
  out.uncertainty.q_loaded = variance(g);
  g.setZero();
  g(4) = ql / d;
  g(5) = -ql / (d * d);
  out.uncertainty.q_c_mag = variance(g);
  g.setZero();
  g(4) = ql / denom;
  g(5) = ql * std::cos(phi) / (denom * denom);
  g(6) = -ql * d * std::sin(phi) / (denom * denom);
  out.uncertainty.q_int = variance(g);
  out.uncertainty.phi = std::sqrt(std::max(0.0, cov(6, 6)));
  out.uncertainty.delay = 1e-9 * std::sqrt(std::max(0.0, cov(2, 2)));
  return out;
}

}  // namespace

ResonanceGuess guess_resonance(const ComplexTrace& trace) {
  trace.validate();
  const std::size_t n = trace.size();
  if (n < 16) throw NoResonanceError("circle fit: trace has fewer than 16 points");

  std::vector<double> mag(n);
  for (std::size_t i = 0; i < n; ++i) mag[i] = std::abs(trace.s21[i]);

  // Noise from successive differences (robust to the smooth line shape).
  std::vector<double> diffs;
  diffs.reserve(n - 1);
  for (std::size_t i = 1; i < n; ++i) diffs.push_back(std::abs(mag[i] - mag[i - 1]));
  const double sigma = median(diffs) / 0.6745 / std::sqrt(2.0);

  const std::size_t width = std::max<std::size_t>(1, n / 64);
  const auto smooth = moving_average(mag, width);
  const std::size_t edge = std::max<std::size_t>(3, n / 10);
  std::vector<double> outer(smooth.begin(), smooth.begin() + static_cast<std::ptrdiff_t>(edge));
  outer.insert(outer.end(), smooth.end() - static_cast<std::ptrdiff_t>(edge), smooth.end());
  const double baseline = median(outer);

  const auto min_it = std::min_element(smooth.begin(), smooth.end());
  const std::size_t imin = static_cast<std::size_t>(min_it - smooth.begin());
  const double depth = baseline - *min_it;
  const double smooth_sigma = sigma / std::sqrt(static_cast<double>(width));
  if (!(baseline > 0.0) || !(depth > 1e-6 * baseline) || depth < 5.0 * smooth_sigma) {
    throw NoResonanceError("circle fit: no resonance dip resolved above the noise");
  }

  const double half = baseline - 0.5 * depth;
  std::size_t left = imin;
  while (left > 0 && smooth[left] < half) --left;
  std::size_t right = imin;
  while (right + 1 < n && smooth[right] < half) ++right;
  auto crossing = [&](std::size_t a, std::size_t b) {
    const double fa = trace.frequency_hz[a];
    const double fb = trace.frequency_hz[b];
    const double ya = smooth[a] - half;
    const double yb = smooth[b] - half;
    if (ya == yb) return 0.5 * (fa + fb);
    return fa + (fb - fa) * ya / (ya - yb);
  };
  const double f_left = left < imin ? crossing(left, left + 1) : trace.frequency_hz[left];
  const double f_right = right > imin ? crossing(right - 1, right) : trace.frequency_hz[right];
  const double step = (trace.frequency_hz.back() - trace.frequency_hz.front()) / static_cast<double>(n - 1);

  ResonanceGuess guess;
  guess.frequency_hz = trace.frequency_hz[imin];
  guess.fwhm_hz = std::max(f_right - f_left, 2.0 * step);
  guess.depth = depth / baseline;
  guess.baseline = baseline;
  return guess;
}

DelayResult remove_delay(const ComplexTrace& trace, const FitOptions& options) {
  const auto guess = guess_resonance(trace);
  const double f0 = guess.frequency_hz;
  const double base_dist = options.baseline_linewidths * guess.fwhm_hz;

  // Separate phase intercepts for the two baseline wings, common slope.
  std::vector<double> f_lo, ph_lo, f_hi, ph_hi;
  auto unwrap_into = [](std::vector<double>& phases, double value) {
    if (!phases.empty()) value = phases.back() + wrap(value - phases.back());
    phases.push_back(value);
  };
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const double f = trace.frequency_hz[i];
    if (f < f0 - base_dist) {
      f_lo.push_back(f);
      unwrap_into(ph_lo, std::arg(trace.s21[i]));
    } else if (f > f0 + base_dist) {
      f_hi.push_back(f);
      unwrap_into(ph_hi, std::arg(trace.s21[i]));
    }
  }
  const auto min_points = static_cast<std::size_t>(std::max(options.min_baseline_points, 2));
  if (f_lo.size() < min_points || f_hi.size() < min_points) {
    throw StageError("delay", "insufficient baseline coverage: need " + std::to_string(min_points) +
                                  " points beyond +-" + std::to_string(options.baseline_linewidths) +
                                  " linewidths on both sides");
  }
  auto centered = [](const std::vector<double>& f, const std::vector<double>& y, double& sxx, double& sxy) {
    const double fm = std::accumulate(f.begin(), f.end(), 0.0) / static_cast<double>(f.size());
    const double ym = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
      sxx += (f[i] - fm) * (f[i] - fm);
      sxy += (f[i] - fm) * (y[i] - ym);
    }
  };
  double sxx = 0.0, sxy = 0.0;
  centered(f_lo, ph_lo, sxx, sxy);
  centered(f_hi, ph_hi, sxx, sxy);
  const double slope_delay = -(sxy / sxx) / (2.0 * pi);

  // Circularity over the whole trace: far-off points pin the delay much
  // better than the resonance window does.
  const ComplexTrace& window = trace;
  const double span = window.frequency_hz.back() - window.frequency_hz.front();
  // The circularity valley is only a few percent of 1/span wide and the
  // objective has spurious minima further out: scan a bracket around the
  // slope estimate, then polish the best cell with Brent.
  const double bracket = 0.05 / span;
  const int cells = 20;
  auto objective = [&](double tau) { return circle_sum_squares(window, tau); };
  double best = slope_delay;
  double err = 0.0;
  try {
    double best_value = std::numeric_limits<double>::infinity();
    int best_cell = 0;
    for (int k = 0; k <= cells; ++k) {
      const double tau = slope_delay - bracket + 2.0 * bracket * k / cells;
      const double value = objective(tau);
      if (value < best_value) {
        best_value = value;
        best_cell = k;
      }
    }
    const double cell = 2.0 * bracket / cells;
    const double center = slope_delay - bracket + cell * best_cell;
    // Brent works on the unit-scaled offset; its tolerances are not scale free.
    const auto [u, value] = boost::math::tools::brent_find_minima(
        [&](double v) { return objective(center + v * cell); }, -1.0, 1.0, 52);
    const double tau = center + u * cell;
    best = tau;
    // Curvature of the sum of squares gives a linearized 1-sigma estimate.
    const double h = 1e-3 * cell;
    const double curvature = (objective(tau + h) - 2.0 * value + objective(tau - h)) / (h * h);
    const double s2 = value / std::max<double>(1.0, static_cast<double>(window.size()) - 4.0);
    err = curvature > 0.0 ? std::sqrt(2.0 * s2 / curvature) : 0.0;
  } catch (const StageError& e) {
    throw StageError("delay", e.what());
  }

  DelayResult result;
  result.corrected = apply_delay(trace, best);
  result.corrected.metadata.delay_s = 0.0;
  result.delay_s = best;
  result.delay_err_s = err;
  return result;
}

Circle fit_circle(std::span<const cplx> points) {
  const std::size_t n = points.size();
  if (n < 3) throw StageError("circle", "need at least three points");
  double mx = 0.0, my = 0.0;
  for (const auto& p : points) {
    mx += p.real();
    my += p.imag();
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);

  double mxx = 0, myy = 0, mxy = 0, mxz = 0, myz = 0, mzz = 0;
  for (const auto& p : points) {
    const double x = p.real() - mx;
    const double y = p.imag() - my;
    const double z = x * x + y * y;
    mxx += x * x;
    myy += y * y;
    mxy += x * y;
    mxz += x * z;
    myz += y * z;
    mzz += z * z;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  mxx *= inv_n;
  myy *= inv_n;
  mxy *= inv_n;
  mxz *= inv_n;
  myz *= inv_n;
  mzz *= inv_n;

  // Rank check on the scatter matrix: collinear points have no circle.
  const double trace_s = mxx + myy;
  const double det_s = mxx * myy - mxy * mxy;
  const double disc = std::sqrt(std::max(0.0, 0.25 * trace_s * trace_s - det_s));
  const double lambda_min = 0.5 * trace_s - disc;
  const double lambda_max = 0.5 * trace_s + disc;
  if (!(lambda_max > 0.0) || lambda_min < 1e-12 * lambda_max) {
    throw StageError("circle", "degenerate (collinear or coincident) points");
  }

  // Taubin fit via Newton iteration on the characteristic polynomial.
  const double mz = mxx + myy;
  const double cov_xy = mxx * myy - mxy * mxy;
  const double var_z = mzz - mz * mz;
  const double a3 = 4.0 * mz;
  const double a2 = -3.0 * mz * mz - mzz;
  const double a1 = var_z * mz + 4.0 * cov_xy * mz - mxz * mxz - myz * myz;
  const double a0 = mxz * (mxz * myy - myz * mxy) + myz * (myz * mxx - mxz * mxy) - var_z * cov_xy;
  const double a22 = a2 + a2;
  const double a33 = a3 + a3 + a3;

  double x = 0.0;
  double y = a0;
  for (int iter = 0; iter < 99; ++iter) {
    const double dy = a1 + x * (a22 + a33 * x);
    const double x_new = x - y / dy;
    if (x_new == x || !std::isfinite(x_new)) break;
    const double y_new = a0 + x_new * (a1 + x_new * (a2 + x_new * a3));
    if (std::abs(y_new) >= std::abs(y)) break;
    x = x_new;
    y = y_new;
  }
  const double det = x * x - x * mz + cov_xy;
  if (!(std::abs(det) > 0.0) || !std::isfinite(det)) throw StageError("circle", "singular Taubin system");
  const double xc = (mxz * (myy - x) - myz * mxy) / det / 2.0;
  const double yc = (myz * (mxx - x) - mxz * mxy) / det / 2.0;

  Circle c;
  c.center = cplx(xc + mx, yc + my);
  c.radius = std::sqrt(xc * xc + yc * yc + mz);
  if (!std::isfinite(c.radius) || !std::isfinite(c.center.real()) || !std::isfinite(c.center.imag())) {
    throw StageError("circle", "non-finite circle parameters");
  }

  // Linearized geometric covariance for (xc, yc, r).
  Eigen::Matrix3d jtj = Eigen::Matrix3d::Zero();
  double ss = 0.0;
  for (const auto& p : points) {
    const cplx d = p - c.center;
    const double dist = std::abs(d);
    const double res = dist - c.radius;
    ss += res * res;
    if (dist == 0.0) continue;
    const Eigen::Vector3d row(-d.real() / dist, -d.imag() / dist, -1.0);
    jtj += row * row.transpose();
  }
  c.rms_residual = std::sqrt(ss / static_cast<double>(n));
  const double s2 = n > 3 ? ss / static_cast<double>(n - 3) : 0.0;
  const Eigen::Matrix3d cov = s2 * jtj.completeOrthogonalDecomposition().pseudoInverse();
  c.center_err = std::sqrt(std::max(cov(0, 0), cov(1, 1)));
  c.radius_err = std::sqrt(std::max(0.0, cov(2, 2)));
  return c;
}

Circle fit_circle(const ComplexTrace& trace) { return fit_circle(std::span<const cplx>(trace.s21)); }

PhaseFit fit_phase(const ComplexTrace& trace, cplx center, double radius, const FitOptions& options) {
  trace.validate();
  const std::size_t n = trace.size();
  if (n < 8) throw StageError("phase", "need at least 8 points");
  if (!(radius > 0.0)) throw StageError("phase", "circle radius must be positive");

  // Initial guess from a smoothed, unwrapped angle sequence.
  std::vector<cplx> rel(n);
  for (std::size_t i = 0; i < n; ++i) rel[i] = trace.s21[i] - center;
  const auto smooth = moving_average(rel, std::max<std::size_t>(1, n / 64));
  std::vector<double> theta(n);
  theta[0] = std::arg(smooth[0]);
  for (std::size_t i = 1; i < n; ++i) theta[i] = theta[i - 1] + wrap(std::arg(smooth[i]) - theta[i - 1]);
  const std::size_t edge = std::max<std::size_t>(1, n / 20);
  const double theta_lo = std::accumulate(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(edge), 0.0) / static_cast<double>(edge);
  const double theta_hi = std::accumulate(theta.end() - static_cast<std::ptrdiff_t>(edge), theta.end(), 0.0) / static_cast<double>(edge);
  const double theta0_guess = 0.5 * (theta_lo + theta_hi);
  // theta decreases through the resonance; orientation from the end points.
  const double sense = theta_hi < theta_lo ? 1.0 : -1.0;
  auto crossing = [&](double level) {
    for (std::size_t i = 1; i < n; ++i) {
      const double a = sense * (theta[i - 1] - level);
      const double b = sense * (theta[i] - level);
      if (a >= 0.0 && b < 0.0) {
        return trace.frequency_hz[i - 1] + (trace.frequency_hz[i] - trace.frequency_hz[i - 1]) * a / (a - b);
      }
    }
    return std::numeric_limits<double>::quiet_NaN();
  };
  double fr_guess = crossing(theta0_guess);
  const double f_plus = crossing(theta0_guess + sense * pi / 2.0);
  const double f_minus = crossing(theta0_guess - sense * pi / 2.0);
  const double mid = 0.5 * (trace.frequency_hz.front() + trace.frequency_hz.back());
  if (!std::isfinite(fr_guess)) fr_guess = mid;
  double q_guess = (std::isfinite(f_plus) && std::isfinite(f_minus) && f_minus > f_plus)
                       ? fr_guess / (f_minus - f_plus)
                       : fr_guess / (0.1 * (trace.frequency_hz.back() - trace.frequency_hz.front()));
  if (!(q_guess > 0.0) || !std::isfinite(q_guess)) q_guess = 1e3;

  // Parameters: theta0, log(Q_l), (f_r - fr_guess) / linewidth_guess.
  const double scale = fr_guess / q_guess;
  std::vector<double> angles(n);
  for (std::size_t i = 0; i < n; ++i) angles[i] = std::arg(rel[i]);

  auto model = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
    const double q = std::exp(p(1));
    const double fr = fr_guess + p(2) * scale;
    for (std::size_t i = 0; i < n; ++i) {
      const double f = trace.frequency_hz[i];
      const double u = 2.0 * q * (1.0 - f / fr);
      const auto row = static_cast<Eigen::Index>(i);
      r(row) = wrap(angles[i] - p(0) - 2.0 * std::atan(u));
      if (jac != nullptr) {
        const double dtheta_du = 2.0 / (1.0 + u * u);
        (*jac)(row, 0) = -1.0;
        (*jac)(row, 1) = -dtheta_du * u;  // du/dlogQ = u
        (*jac)(row, 2) = -dtheta_du * (2.0 * q * f / (fr * fr)) * scale;
      }
    }
  };
  Eigen::VectorXd start(3);
  start << theta0_guess, std::log(q_guess), 0.0;
  const auto fit = detail::least_squares(start, static_cast<int>(n), model, options.max_iterations);
  if (!fit.converged) {
    throw StageError("phase", "no convergence after " + std::to_string(fit.iterations) + " iterations");
  }

  PhaseFit out;
  out.theta0 = wrap(fit.params(0));
  out.q_loaded = std::exp(fit.params(1));
  out.f_r_hz = fr_guess + fit.params(2) * scale;
  out.theta0_err = std::sqrt(std::max(0.0, fit.covariance(0, 0)));
  out.q_loaded_err = out.q_loaded * std::sqrt(std::max(0.0, fit.covariance(1, 1)));
  out.f_r_err = scale * std::sqrt(std::max(0.0, fit.covariance(2, 2)));
  out.rms_residual = fit.rms;
  out.iterations = fit.iterations;
  if (!(out.q_loaded > 0.0) || !std::isfinite(out.f_r_hz)) throw StageError("phase", "non-physical fit result");
  return out;
}

CircleFitResult extract_q(const ComplexTrace& trace, const FitOptions& options) {
  const auto guess = guess_resonance(trace);
  const auto delay = remove_delay(trace, options);

  const double half_window = options.window_linewidths * guess.fwhm_hz;
  const auto window = select_window(delay.corrected, guess.frequency_hz - half_window,
                                    guess.frequency_hz + half_window);
  const Circle circle = fit_circle(window);
  PhaseFit phase = fit_phase(window, circle.center, circle.radius, options);

  // At low SNR the wrapped-angle fit can lock onto noise away from the dip;
  // restart from the magnitude estimate and let the joint fit settle it.
  const double q_dip = guess.frequency_hz / guess.fwhm_hz;
  const bool implausible = std::abs(phase.f_r_hz - guess.frequency_hz) > guess.fwhm_hz ||
                           phase.q_loaded > 4.0 * q_dip || phase.q_loaded < 0.25 * q_dip;
  if (implausible && options.refine) {
    std::vector<cplx> rel(window.size());
    for (std::size_t i = 0; i < window.size(); ++i) rel[i] = window.s21[i] - circle.center;
    const auto smooth = moving_average(rel, std::max<std::size_t>(1, window.size() / 32));
    const auto nearest = std::min_element(window.frequency_hz.begin(), window.frequency_hz.end(),
                                          [&](double a, double b) {
                                            return std::abs(a - guess.frequency_hz) < std::abs(b - guess.frequency_hz);
                                          });
    phase.theta0 = std::arg(smooth[static_cast<std::size_t>(nearest - window.frequency_hz.begin())]);
    phase.f_r_hz = guess.frequency_hz;
    phase.q_loaded = q_dip;
  }

  // Off-resonant point sits diametrically opposite the resonance point.
  const cplx off = circle.center + std::polar(circle.radius, phase.theta0 + pi);
  if (!(std::abs(off) > 0.0)) throw StageError("decomposition", "vanishing off-resonant amplitude");
  const cplx center_n = circle.center / off;
  const double radius_n = circle.radius / std::abs(off);
  const double diameter = 2.0 * radius_n;
  const double phi = std::arg(1.0 - center_n);
  const double denom = 1.0 - diameter * std::cos(phi);
  if (!(denom > 0.0)) throw StageError("decomposition", "non-physical internal quality factor (overcoupled circle)");

  CircleFitResult result;
  result.f_r_hz = phase.f_r_hz;
  result.q_loaded = phase.q_loaded;
  result.q_c_mag = phase.q_loaded / diameter;
  result.phi = phi;
  result.q_int = phase.q_loaded / denom;
  result.delay_s = delay.delay_s;
  result.environment = off;

  const double sigma_d = 2.0 * circle.radius_err / std::abs(off);
  const double sigma_phi = circle.center_err / circle.radius;
  const double dqi_dql = 1.0 / denom;
  const double dqi_dd = phase.q_loaded * std::cos(phi) / (denom * denom);
  const double dqi_dphi = -phase.q_loaded * diameter * std::sin(phi) / (denom * denom);
  result.uncertainty.f_r = phase.f_r_err;
  result.uncertainty.q_loaded = phase.q_loaded_err;
  result.uncertainty.q_int = std::sqrt(std::pow(dqi_dql * phase.q_loaded_err, 2) + std::pow(dqi_dd * sigma_d, 2) +
                                       std::pow(dqi_dphi * sigma_phi, 2));
  result.uncertainty.q_c_mag = result.q_c_mag * std::hypot(phase.q_loaded_err / phase.q_loaded, sigma_d / diameter);
  result.uncertainty.phi = sigma_phi;
  result.uncertainty.delay = delay.delay_err_s;

  if (options.refine) {
    try {
      result = refine_notch(trace, result, options);
    } catch (const StageError&) {
      // The staged estimate stands on its own unless it was already a fallback.
      if (implausible) throw;
    }
  }

  double ss = 0.0;
  for (std::size_t i = 0; i < trace.size(); ++i) ss += std::norm(model_s21(result, trace.frequency_hz[i]) - trace.s21[i]);
  result.residual = std::sqrt(ss / static_cast<double>(trace.size()));
  return result;
}

cplx model_s21(const CircleFitResult& fit, double f) {
  const cplx i(0.0, 1.0);
  const cplx resonance = (fit.q_loaded / fit.q_c_mag) * std::polar(1.0, fit.phi) /
                         (1.0 + 2.0 * i * fit.q_loaded * (f / fit.f_r_hz - 1.0));
  return fit.environment * std::polar(1.0, -2.0 * pi * f * fit.delay_s) * (1.0 - resonance);
}

}  // namespace rydcpw::circlefit
