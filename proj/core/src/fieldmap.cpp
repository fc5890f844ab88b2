#include "rydcpw/fieldmap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

#include <Eigen/SparseCholesky>
#include <Eigen/Sparse>

#include "rydcpw/constants.hpp"
#include "rydcpw/csv.hpp"
#include "rydcpw/error.hpp"
#include "rydcpw/random.hpp"

namespace rydcpw::fieldmap {

namespace {

double local_step(double v, const std::vector<double>& fine_points, double roi_extent, const GridSpec& g) {
  double d_fine = std::numeric_limits<double>::infinity();
  for (double f : fine_points) d_fine = std::min(d_fine, std::abs(v - f));
  const double slope = g.growth - 1.0;
  const double d_roi = std::max(0.0, std::abs(v) - roi_extent);
  return std::min({g.max_step_m, g.min_step_m + slope * d_fine, g.roi_step_m + slope * d_roi});
}

// Marches lo -> hi with the local step, then rescales so the steps tile the
// interval exactly.
void append_interval(std::vector<double>& axis, double lo, double hi, const std::vector<double>& fine_points,
                     double roi_extent, const GridSpec& g) {
  std::vector<double> steps;
  double pos = lo;
  while (true) {
    const double h = local_step(pos, fine_points, roi_extent, g);
    if (pos + h >= hi) {
      // Merge a sliver into the previous step rather than keep a tiny cell.
      if (!steps.empty() && hi - pos < 0.5 * h) {
        steps.back() += hi - pos;
      } else {
        steps.push_back(hi - pos);
      }
      break;
    }
    steps.push_back(h);
    pos += h;
  }
  pos = lo;
  for (std::size_t k = 0; k + 1 < steps.size(); ++k) {
    pos += steps[k];
    axis.push_back(pos);
  }
  axis.push_back(hi);
}

std::vector<double> symmetric_x_axis(const CpwGeometry& geo, const GridSpec& g) {
  const double a = 0.5 * geo.center_width_m;
  const double b = a + geo.gap_width_m;
  const auto positive = graded_axis({0.0, a, b, geo.box_half_width_m}, {a, b}, g.roi_half_width_m, g);
  std::vector<double> axis;
  for (auto it = positive.rbegin(); it + 1 != positive.rend(); ++it) axis.push_back(-*it);
  axis.insert(axis.end(), positive.begin(), positive.end());
  return axis;
}

std::size_t locate(const std::vector<double>& axis, double v) {
  auto it = std::upper_bound(axis.begin(), axis.end(), v);
  std::size_t i = static_cast<std::size_t>(it - axis.begin());
  if (i == 0) return 0;
  return std::min(i - 1, axis.size() - 2);
}

struct Solution {
  std::vector<double> phi;
  double capacitance = 0.0;
  double residual = 0.0;
  int iterations = 0;
};

Solution solve_layered(const std::vector<double>& x, const std::vector<double>& y, std::size_t j0,
                       double half_center, double half_outer, double eps_sub, const GridSpec& grid) {
  const std::size_t nx = x.size();
  const std::size_t ny = y.size();
  const double eps0 = constants::vacuum_permittivity;
  auto node = [nx](std::size_t i, std::size_t j) { return j * nx + i; };
  auto row_eps = [&](std::size_t r) { return r < j0 ? eps_sub : 1.0; };  // cell between y[r], y[r+1]

  // Dirichlet values: -1 marks a free node.
  std::vector<double> fixed(nx * ny, -1.0);
  const double tol = 1e-3 * grid.min_step_m;
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      if (i == 0 || j == 0 || i + 1 == nx || j + 1 == ny) {
        fixed[node(i, j)] = 0.0;
      } else if (j == j0) {
        const double ax = std::abs(x[i]);
        if (ax <= half_center + tol) fixed[node(i, j)] = 1.0;
        else if (ax >= half_outer - tol) fixed[node(i, j)] = 0.0;
      }
    }
  }
  std::vector<Eigen::Index> index(nx * ny, -1);
  Eigen::Index free_count = 0;
  for (std::size_t k = 0; k < nx * ny; ++k) {
    if (fixed[k] < 0.0) index[k] = free_count++;
  }

  struct Edge {
    std::size_t a, b;
    double w;
  };
  std::vector<Edge> edges;
  edges.reserve(2 * nx * ny);
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      if (i + 1 < nx && j > 0 && j + 1 < ny) {
        const double dual = 0.5 * (row_eps(j - 1) * (y[j] - y[j - 1]) + row_eps(j) * (y[j + 1] - y[j]));
        edges.push_back({node(i, j), node(i + 1, j), eps0 * dual / (x[i + 1] - x[i])});
      }
      if (j + 1 < ny && i > 0 && i + 1 < nx) {
        const double dual = 0.5 * (x[i + 1] - x[i - 1]);
        edges.push_back({node(i, j), node(i, j + 1), eps0 * row_eps(j) * dual / (y[j + 1] - y[j])});
      }
    }
  }

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(4 * edges.size());
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(free_count);
  for (const auto& e : edges) {
    const auto ia = index[e.a];
    const auto ib = index[e.b];
    if (ia >= 0) {
      triplets.emplace_back(ia, ia, e.w);
      if (ib >= 0) triplets.emplace_back(ia, ib, -e.w);
      else rhs(ia) += e.w * fixed[e.b];
    }
    if (ib >= 0) {
      triplets.emplace_back(ib, ib, e.w);
      if (ia >= 0) triplets.emplace_back(ib, ia, -e.w);
      else rhs(ib) += e.w * fixed[e.a];
    }
  }
  Eigen::SparseMatrix<double> a(free_count, free_count);
  a.setFromTriplets(triplets.begin(), triplets.end());
  a.makeCompressed();

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
  solver.compute(a);
  if (solver.info() != Eigen::Success) throw NumericalError("field solver: sparse factorization failed");
  Eigen::VectorXd sol = solver.solve(rhs);
  const Eigen::VectorXd diag = a.diagonal();
  auto scaled_residual = [&](const Eigen::VectorXd& r) { return (r.array() / diag.array()).abs().maxCoeff(); };

  Solution out;
  Eigen::VectorXd r = a * sol - rhs;
  out.residual = scaled_residual(r);
  // Iterative refinement with the factorization; bounded sweeps.
  while (out.iterations < grid.refinement_sweeps && out.residual > 0.01 * grid.tolerance) {
    sol -= solver.solve(r);
    r = a * sol - rhs;
    out.residual = scaled_residual(r);
    ++out.iterations;
  }
  if (!sol.allFinite() || !(out.residual <= grid.tolerance)) {
    throw NumericalError("field solver: not converged after " + std::to_string(out.iterations) +
                         " refinement sweeps (scaled residual " + csv::format_double(out.residual) + ")");
  }
  out.phi.resize(nx * ny);
  for (std::size_t k = 0; k < nx * ny; ++k) out.phi[k] = index[k] >= 0 ? sol(index[k]) : fixed[k];
  double energy = 0.0;
  for (const auto& e : edges) {
    const double d = out.phi[e.a] - out.phi[e.b];
    energy += e.w * d * d;
  }
  out.capacitance = energy;
  return out;
}

double derivative(const std::vector<double>& axis, const std::vector<double>& phi, std::size_t stride,
                  std::size_t base, std::size_t i) {
  const std::size_t n = axis.size();
  if (i == 0) return (phi[base + stride] - phi[base]) / (axis[1] - axis[0]);
  if (i + 1 == n) return (phi[base] - phi[base - stride]) / (axis[n - 1] - axis[n - 2]);
  const double hm = axis[i] - axis[i - 1];
  const double hp = axis[i + 1] - axis[i];
  const double dm = (phi[base] - phi[base - stride]) / hm;
  const double dp = (phi[base + stride] - phi[base]) / hp;
  return (dm * hp + dp * hm) / (hm + hp);
}

}  // namespace

void CpwGeometry::validate() const {
  if (!(center_width_m > 0.0)) throw ConfigError("fieldmap: center conductor width must be positive");
  if (!(gap_width_m > 0.0)) throw ConfigError("fieldmap: gap width must be positive (w_g -> 0 is degenerate)");
  if (!(substrate_permittivity >= 1.0)) throw ConfigError("fieldmap: substrate permittivity must be >= 1");
  const double outer = 0.5 * center_width_m + gap_width_m;
  if (!(2.0 * box_half_width_m >= 10.0 * center_width_m) || !(box_half_width_m > 2.0 * outer)) {
    throw ConfigError("fieldmap: box must span at least 10 center widths and clear the gaps");
  }
  if (!(box_height_m >= 500e-6) || !(box_depth_m > 0.0)) {
    throw ConfigError("fieldmap: box must extend at least 500 um above the chip and have positive depth");
  }
}

CpwGeometry CpwGeometry::scaled(double factor) const {
  CpwGeometry g = *this;
  g.center_width_m *= factor;
  g.gap_width_m *= factor;
  return g;
}

GridSpec GridSpec::refined() const {
  GridSpec g = *this;
  g.min_step_m *= 0.5;
  g.roi_step_m *= 0.5;
  g.max_step_m *= 0.5;
  g.growth = std::sqrt(growth);
  return g;
}

std::vector<double> graded_axis(const std::vector<double>& breakpoints, const std::vector<double>& fine_points,
                                double roi_extent, const GridSpec& grid) {
  if (breakpoints.size() < 2) throw ConfigError("fieldmap: axis needs at least two breakpoints");
  if (!(grid.min_step_m > 0.0) || !(grid.roi_step_m >= grid.min_step_m) || !(grid.max_step_m >= grid.roi_step_m) ||
      !(grid.growth > 1.0)) {
    throw ConfigError("fieldmap: invalid grid spacing parameters (need 0 < min <= roi <= max step, growth > 1)");
  }
  std::vector<double> axis{breakpoints.front()};
  for (std::size_t k = 0; k + 1 < breakpoints.size(); ++k) {
    if (!(breakpoints[k + 1] > breakpoints[k])) throw ConfigError("fieldmap: breakpoints must ascend");
    append_interval(axis, breakpoints[k], breakpoints[k + 1], fine_points, roi_extent, grid);
  }
  return axis;
}

CrossSectionField solve_cross_section(const CpwGeometry& geometry, const GridSpec& grid) {
  geometry.validate();
  if (4.0 * grid.min_step_m > geometry.gap_width_m) {
    throw ConfigError("fieldmap: grid too coarse to resolve the gap (min step > w_g / 4)");
  }
  CrossSectionField f;
  f.geometry_ = geometry;
  f.x_ = symmetric_x_axis(geometry, grid);
  f.y_ = graded_axis({-geometry.box_depth_m, 0.0, geometry.box_height_m}, {0.0}, grid.roi_height_m, grid);
  const std::size_t j0 = static_cast<std::size_t>(std::find(f.y_.begin(), f.y_.end(), 0.0) - f.y_.begin());
  const double a = 0.5 * geometry.center_width_m;
  const double b = a + geometry.gap_width_m;

  const auto layered = solve_layered(f.x_, f.y_, j0, a, b, geometry.substrate_permittivity, grid);
  const auto vacuum = solve_layered(f.x_, f.y_, j0, a, b, 1.0, grid);
  f.phi_ = layered.phi;
  f.capacitance_ = layered.capacitance;
  f.capacitance_air_ = vacuum.capacitance;
  f.residual_ = std::max(layered.residual, vacuum.residual);
  f.iterations_ = layered.iterations;

  const std::size_t nx = f.nx();
  const std::size_t ny = f.ny();
  f.e_mag_.assign(nx * ny, 0.0);
  const double tol = 1e-3 * grid.min_step_m;
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      const std::size_t k = j * nx + i;
      if (j == j0) {
        const double ax = std::abs(f.x_[i]);
        if (ax <= a + tol || ax >= b - tol) continue;  // on a conductor
      }
      const double ex = derivative(f.x_, f.phi_, 1, k, i);
      const double ey = derivative(f.y_, f.phi_, nx, k, j);
      f.e_mag_[k] = std::hypot(ex, ey);
    }
  }
  return f;
}

double CrossSectionField::e_mag_at(double x_m, double y_m) const {
  if (x_m < x_.front() || x_m > x_.back() || y_m < y_.front() || y_m > y_.back()) {
    throw DomainError("fieldmap: point (" + csv::format_double(x_m) + ", " + csv::format_double(y_m) +
                      ") m lies outside the solved cross-section");
  }
  const std::size_t i = locate(x_, x_m);
  const std::size_t j = locate(y_, y_m);
  const double tx = (x_m - x_[i]) / (x_[i + 1] - x_[i]);
  const double ty = (y_m - y_[j]) / (y_[j + 1] - y_[j]);
  const std::size_t n = nx();
  const double v00 = e_mag_[j * n + i];
  const double v10 = e_mag_[j * n + i + 1];
  const double v01 = e_mag_[(j + 1) * n + i];
  const double v11 = e_mag_[(j + 1) * n + i + 1];
  return (1 - ty) * ((1 - tx) * v00 + tx * v10) + ty * ((1 - tx) * v01 + tx * v11);
}

double CrossSectionField::potential_at(double x_m, double y_m) const {
  if (x_m < x_.front() || x_m > x_.back() || y_m < y_.front() || y_m > y_.back()) {
    throw DomainError("fieldmap: point lies outside the solved cross-section");
  }
  const std::size_t i = locate(x_, x_m);
  const std::size_t j = locate(y_, y_m);
  const double tx = (x_m - x_[i]) / (x_[i + 1] - x_[i]);
  const double ty = (y_m - y_[j]) / (y_[j + 1] - y_[j]);
  const std::size_t n = nx();
  return (1 - ty) * ((1 - tx) * phi_[j * n + i] + tx * phi_[j * n + i + 1]) +
         ty * ((1 - tx) * phi_[(j + 1) * n + i] + tx * phi_[(j + 1) * n + i + 1]);
}

double CrossSectionField::mirror_asymmetry() const {
  const std::size_t n = nx();
  double worst = 0.0;
  for (std::size_t j = 0; j < ny(); ++j) {
    for (std::size_t i = 0; i < n / 2; ++i) {
      worst = std::max(worst, std::abs(phi_[j * n + i] - phi_[j * n + (n - 1 - i)]));
    }
  }
  return worst;
}

void CrossSectionField::write_csv(std::ostream& out, double max_abs_x, double y_min, double y_max) const {
  out << "x_m,y_m,e_mag_per_volt\n";
  for (std::size_t j = 0; j < ny(); ++j) {
    if (y_[j] < y_min || y_[j] > y_max) continue;
    for (std::size_t i = 0; i < nx(); ++i) {
      if (std::abs(x_[i]) > max_abs_x) continue;
      out << csv::format_double(x_[i]) << ',' << csv::format_double(y_[j]) << ','
          << csv::format_double(e_mag_[j * nx() + i]) << '\n';
    }
  }
}

double conformal_capacitance(const CpwGeometry& geometry) {
  geometry.validate();
  const double a = 0.5 * geometry.center_width_m;
  const double k = a / (a + geometry.gap_width_m);
  const double kp = std::sqrt(1.0 - k * k);
  return 2.0 * constants::vacuum_permittivity * (geometry.substrate_permittivity + 1.0) * std::comp_ellint_1(k) /
         std::comp_ellint_1(kp);
}

double conformal_effective_permittivity(const CpwGeometry& geometry) {
  geometry.validate();
  return 0.5 * (geometry.substrate_permittivity + 1.0);
}

double field_at(double x_m, double y_m, double z_m, const CrossSectionField& cross,
                const resonator::ResonatorParams& params, double v_antinode) {
  return v_antinode * cross.e_mag_at(x_m, y_m) * std::abs(resonator::mode_profile(z_m, params));
}

void EnsembleSpec::validate() const {
  if (!(fwhm_x_m >= 0.0) || !(fwhm_y_m >= 0.0) || !(bunch_length_m >= 0.0)) {
    throw ConfigError("ensemble: widths and bunch length must be non-negative");
  }
  if (n_samples < 1) throw ConfigError("ensemble: n_samples must be at least 1");
  if (!std::isfinite(center_height_m)) throw ConfigError("ensemble: center height must be finite");
}

AtomPosition sample_atom(const EnsembleSpec& spec, std::size_t index) {
  const CounterRng transverse(spec.seed, 0xE75A);
  const CounterRng longitudinal(spec.seed, 0xE75B);
  const auto [gx, gy] = transverse.normal_pair(index);
  AtomPosition p;
  p.x_m = gx * spec.fwhm_x_m / fwhm_per_sigma;
  p.y_m = spec.center_height_m + gy * spec.fwhm_y_m / fwhm_per_sigma;
  p.z_offset_m = (longitudinal.uniform(index) - 0.5) * spec.bunch_length_m;
  return p;
}

std::vector<AtomPosition> sample_ensemble(const EnsembleSpec& spec) {
  spec.validate();
  std::vector<AtomPosition> out(spec.n_samples);
  for (std::size_t i = 0; i < spec.n_samples; ++i) out[i] = sample_atom(spec, i);
  return out;
}

}  // namespace rydcpw::fieldmap
