#include "rydcpw/radial.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

#include "rydcpw/error.hpp"

namespace rydcpw::atoms {

RadialWavefunction solve_radial(double n_star, int l, const RadialOptions& options) {
  if (!(n_star > 0.0) || l < 0) throw DomainError("solve_radial: require n* > 0 and l >= 0");
  if (!(options.step > 0.0) || !(options.r_floor > 0.0)) {
    throw ConfigError("solve_radial: step and r_floor must be positive");
  }
  const double h = options.step;
  const double energy = -0.5 / (n_star * n_star);
  const double r_out = 2.0 * n_star * (n_star + options.outer_margin);
  const int k_out = static_cast<int>(std::ceil(std::sqrt(r_out) / h));
  const int k_floor = std::max(1, static_cast<int>(std::ceil(std::sqrt(options.r_floor) / h)));
  if (k_out - k_floor < 16) {
    throw NumericalError("solve_radial: grid underflow for n*=" + std::to_string(n_star) +
                         " (fewer than 16 points between r_floor and r_out)");
  }

  const double centrifugal = (2.0 * l + 0.5) * (2.0 * l + 1.5);
  const double r_inner = n_star * n_star -
                         n_star * std::sqrt(std::max(0.0, n_star * n_star - l * (l + 1.0)));
  auto g = [&](int k) {
    const double x = k * h;
    return centrifugal / (x * x) - 8.0 - 8.0 * x * x * energy;
  };

  // values are filled from k_out downward, then reversed.
  std::vector<double> y;
  y.reserve(static_cast<std::size_t>(k_out - k_floor + 1));
  const double c = h * h / 12.0;
  y.push_back(1e-30);
  y.push_back(1e-28);
  double g_prev = g(k_out);
  double g_cur = g(k_out - 1);
  int k = k_out - 1;
  while (k - 1 >= k_floor) {
    const double g_next = g(k - 1);
    const std::size_t i = y.size() - 1;
    const double next = (2.0 * y[i] * (1.0 + 5.0 * c * g_cur) - y[i - 1] * (1.0 - c * g_prev)) /
                        (1.0 - c * g_next);
    const double r_next = (k - 1) * h * (k - 1) * h;
    if (l > 0 && r_next < r_inner && std::abs(next) > std::abs(y[i])) break;
    y.push_back(next);
    g_prev = g_cur;
    g_cur = g_next;
    --k;
  }

  std::reverse(y.begin(), y.end());
  RadialWavefunction wf;
  wf.n_star = n_star;
  wf.l = l;
  wf.step = h;
  wf.first_index = k;
  wf.values = std::move(y);

  double norm = 0.0;
  for (std::size_t i = 0; i < wf.values.size(); ++i) {
    const double x = (wf.first_index + static_cast<int>(i)) * h;
    norm += wf.values[i] * wf.values[i] * x * x;
  }
  norm = std::sqrt(2.0 * norm * h);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw NumericalError("solve_radial: normalization failed for n*=" + std::to_string(n_star) +
                         ", l=" + std::to_string(l));
  }
  for (double& v : wf.values) v /= norm;
  return wf;
}

double radial_integral(const RadialWavefunction& a, const RadialWavefunction& b, int power) {
  if (a.step != b.step) throw DomainError("radial_integral: wavefunctions on different grids");
  const int lo = std::max(a.first_index, b.first_index);
  const int hi = std::min(a.last_index(), b.last_index());
  const double h = a.step;
  if (power < -1) throw DomainError("radial_integral: power must be >= -1");
  const int exponent = 2 * power + 2;
  double sum = 0.0;
  for (int k = lo; k <= hi; ++k) {
    const double x = k * h;
    double weight = 1.0;
    for (int e = 0; e < exponent; ++e) weight *= x;
    sum += a.values[static_cast<std::size_t>(k - a.first_index)] *
           b.values[static_cast<std::size_t>(k - b.first_index)] * weight;
  }
  return 2.0 * sum * h;
}

double radial_matrix_element(const RydbergLevel& a, const RydbergLevel& b,
                             const RadialOptions& options) {
  if (std::abs(a.l - b.l) != 1) {
    throw DomainError("radial_matrix_element: levels are not dipole coupled (l=" +
                      std::to_string(a.l) + ", l'=" + std::to_string(b.l) + ")");
  }
  const auto wa = solve_radial(a.n_star, a.l, options);
  const auto wb = solve_radial(b.n_star, b.l, options);
  return radial_integral(wa, wb, 1);
}

}  // namespace rydcpw::atoms
