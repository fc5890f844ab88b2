#pragma once

#include <vector>

#include "rydcpw/atoms.hpp"

namespace rydcpw::atoms {

/// Grid and truncation settings for the Numerov radial solver. Lengths are
/// in atomic units (Bohr radii).
struct RadialOptions {
  /// Step in the scaled coordinate x = sqrt(r). The local wavelength is
  /// nearly constant in x, so one step size serves every n.
  double step = 0.01;
  /// Innermost radius reached by the inward integration.
  double r_floor = 1e-4;
  /// Outer start radius r_out = 2 n* (n* + outer_margin).
  double outer_margin = 15.0;
};

/// Radial function sampled on x_k = k * step, stored as
/// y(x) = x^{3/2} R(x^2) so that the Coulomb radial equation becomes
///   y'' = [(2l + 1/2)(2l + 3/2)/x^2 + 8 x^2 (V(x^2) - E)] y.
/// Normalized to 2 * sum y^2 x^2 dx = 1, positive outer lobe.
struct RadialWavefunction {
  double n_star = 0.0;
  int l = 0;
  double step = 0.0;
  int first_index = 0;  // k of values.front()
  std::vector<double> values;

  int last_index() const { return first_index + static_cast<int>(values.size()) - 1; }
};

/// Inward Numerov integration of the Coulomb radial equation at the
/// quantum-defect-shifted energy -1/(2 n*^2). Inside the inner classical
/// turning point the integration stops as soon as |y| grows inward, which
/// discards the irregular solution that a non-integer n* admits.
RadialWavefunction solve_radial(double n_star, int l, const RadialOptions& options = {});

/// <a| r^power |b> in atomic units for two wavefunctions on the same grid.
double radial_integral(const RadialWavefunction& a, const RadialWavefunction& b, int power = 1);

/// <a| r |b> for a dipole-coupled pair (|l_a - l_b| = 1).
double radial_matrix_element(const RydbergLevel& a, const RydbergLevel& b,
                             const RadialOptions& options = {});

}  // namespace rydcpw::atoms
