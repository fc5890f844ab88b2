#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "rydcpw/resonator.hpp"

namespace rydcpw::fieldmap {

/// Symmetric CPW cross-section: zero-thickness conductors in the plane
/// y = 0, substrate below, vacuum above, inside a grounded rectangular box.
/// The ground planes run from the gap edge to the box side walls.
struct CpwGeometry {
  double center_width_m = 20e-6;
  double gap_width_m = 10e-6;
  double substrate_permittivity = 11.9;
  double box_half_width_m = 2e-3;
  double box_height_m = 2e-3;  // vacuum above the chip
  double box_depth_m = 2e-3;   // substrate below the chip

  /// Throws ConfigError for non-positive widths, a box that does not clear
  /// the conductors by 10 w_c laterally or 500 um vertically, or eps_r < 1.
  void validate() const;

  /// Copy with every length multiplied by `factor`, box unchanged.
  CpwGeometry scaled(double factor) const;
};

/// Graded mesh. The spacing is `min_step_m` at conductor edges and at
/// y = 0 and grows by `growth` per cell; it is capped at `roi_step_m`
/// inside the region |x| <= roi_half_width_m, |y| <= roi_height_m where
/// atoms sit, and at `max_step_m` elsewhere.
struct GridSpec {
  double min_step_m = 0.25e-6;
  double roi_step_m = 4e-6;
  double max_step_m = 100e-6;
  double growth = 1.15;
  double roi_half_width_m = 300e-6;
  double roi_height_m = 300e-6;
  int refinement_sweeps = 3;  // iterative refinement after the direct solve
  double tolerance = 1e-10;   // max |r_i / A_ii| accepted

  /// Twice as dense everywhere.
  GridSpec refined() const;
};

/// Converged quasi-static potential and field magnitude per unit
/// center-conductor voltage.
class CrossSectionField {
 public:
  const CpwGeometry& geometry() const { return geometry_; }
  const std::vector<double>& x() const { return x_; }
  const std::vector<double>& y() const { return y_; }

  /// Node values, row-major with x fastest: index j * nx + i.
  const std::vector<double>& potential() const { return phi_; }
  const std::vector<double>& e_mag() const { return e_mag_; }

  std::size_t nx() const { return x_.size(); }
  std::size_t ny() const { return y_.size(); }

  /// Bilinear interpolation of |E| (V/m per V). Throws DomainError outside
  /// the box.
  double e_mag_at(double x_m, double y_m) const;
  double potential_at(double x_m, double y_m) const;

  /// Line capacitance (F/m) from the field energy.
  double capacitance() const { return capacitance_; }
  /// Same geometry with the substrate replaced by vacuum.
  double capacitance_air() const { return capacitance_air_; }
  double effective_permittivity() const { return capacitance_ / capacitance_air_; }

  /// max |(A phi - b)_i / A_ii| over free nodes, i.e. the discrete
  /// Laplacian residual in units of the unit conductor potential.
  double laplace_residual() const { return residual_; }
  /// max |phi(x, y) - phi(-x, y)|.
  double mirror_asymmetry() const;
  int iterations() const { return iterations_; }

  /// Grid dump with columns x_m, y_m, e_mag_per_volt, restricted to
  /// |x| <= max_abs_x and y in [y_min, y_max].
  void write_csv(std::ostream& out, double max_abs_x, double y_min, double y_max) const;

 private:
  friend CrossSectionField solve_cross_section(const CpwGeometry&, const GridSpec&);

  CpwGeometry geometry_;
  std::vector<double> x_, y_;
  std::vector<double> phi_, e_mag_;
  double capacitance_ = 0.0;
  double capacitance_air_ = 0.0;
  double residual_ = 0.0;
  int iterations_ = 0;
};

/// Finite-volume 5-point Laplace solve on a graded rectilinear mesh with
/// the center conductor at 1 V and grounds at 0 V. Solves both the layered
/// problem and the all-vacuum problem (for the effective permittivity).
/// Sparse Cholesky followed by bounded iterative-refinement sweeps; throws
/// NumericalError with the residual when the sweeps do not reach the
/// tolerance.
CrossSectionField solve_cross_section(const CpwGeometry& geometry = {}, const GridSpec& grid = {});

/// Conformal-mapping line capacitance of a CPW on an infinitely thick
/// substrate with infinite ground planes: 2 eps0 (eps_r + 1) K(k)/K(k').
double conformal_capacitance(const CpwGeometry& geometry);
/// (eps_r + 1) / 2 for the same idealization.
double conformal_effective_permittivity(const CpwGeometry& geometry);

/// Mesh coordinates for [breakpoints.front(), breakpoints.back()] containing
/// every breakpoint. Spacing follows the size function described at
/// GridSpec, with the given fine points and a region of interest
/// |v| <= roi_extent.
std::vector<double> graded_axis(const std::vector<double>& breakpoints, const std::vector<double>& fine_points,
                                double roi_extent, const GridSpec& grid);

/// Microwave amplitude v_antinode * e_mag(x, y) * |mode_profile(z)| (V/m).
double field_at(double x_m, double y_m, double z_m, const CrossSectionField& cross,
                const resonator::ResonatorParams& params, double v_antinode);

/// Gaussian cloud in x and y, uniform along the bunch.
struct EnsembleSpec {
  double center_height_m = 100e-6;
  double fwhm_x_m = 100e-6;
  double fwhm_y_m = 100e-6;
  double bunch_length_m = 2.5e-3;
  std::size_t n_samples = 2000;
  std::uint64_t seed = 1;

  void validate() const;
};

struct AtomPosition {
  double x_m = 0.0;
  double y_m = 0.0;
  double z_offset_m = 0.0;  // relative to the bunch center
};

/// Atom i depends only on (seed, i).
std::vector<AtomPosition> sample_ensemble(const EnsembleSpec& spec);
AtomPosition sample_atom(const EnsembleSpec& spec, std::size_t index);

inline constexpr double fwhm_per_sigma = 2.3548200450309493;

}  // namespace rydcpw::fieldmap
