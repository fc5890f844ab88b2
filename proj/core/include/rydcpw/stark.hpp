#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rydcpw/atoms.hpp"
#include "rydcpw/radial.hpp"

namespace rydcpw::atoms {

/// Diagonalization basis: every (n, l) with n_min <= n <= n_max and
/// |m| <= l <= min(n - 1, l_max) at fixed m. l_max < 0 means no limit.
struct StarkBasisSpec {
  int n_min = 52;
  int n_max = 59;
  int l_max = -1;
  int m = 0;
};

struct StarkOptions {
  RadialOptions radial;
  int threads = 1;
};

/// Eigenvalue sheets of H0 + F z over an ascending list of static fields.
/// `eigenvalues[f]` is ascending; `labels[f][j]` is the basis index of the
/// zero-field level that eigenvalue j is adiabatically connected to.
struct StarkMap {
  std::vector<double> fields_v_per_cm;
  std::vector<RydbergLevel> basis;
  std::vector<std::vector<double>> eigenvalues;
  std::vector<std::vector<int>> labels;

  int index_of(int n, int l) const;  // -1 when absent
  std::vector<double> sheet(int basis_index) const;
  double max_sheet_jump_hz(int basis_index) const;
  double max_jump_hz() const;

  /// CSV columns: field_v_per_cm, sheet_label, energy_hz.
  void write_csv(std::ostream& out) const;
};

/// Spectroscopic label such as "55s" or "57l9".
std::string level_label(int n, int l);

std::vector<RydbergLevel> make_stark_basis(const StarkBasisSpec& spec, const DefectTable& defects);

/// Matrix of <i| z |j> in Hz per (V/cm); non-zero only for l' = l +- 1 at
/// equal m. Symmetric by construction.
Eigen::MatrixXd stark_dipole_matrix(std::span<const RydbergLevel> basis,
                                    const RadialOptions& radial = {});

/// H0 + F D with H0 the zero-field energies (Hz) and F in V/cm.
Eigen::MatrixXd stark_hamiltonian(std::span<const RydbergLevel> basis,
                                  const Eigen::MatrixXd& dipole, double field_v_per_cm);

/// Diagonalizes at each field and assigns adiabatic labels by maximum
/// eigenvector overlap with the previous field point (ties go to the
/// closest energy). The first field is matched against the bare basis.
StarkMap diagonalize_stark(std::vector<RydbergLevel> basis, const Eigen::MatrixXd& dipole,
                           std::span<const double> fields_v_per_cm, int threads = 1);

StarkMap build_stark_map(const StarkBasisSpec& spec, std::span<const double> fields_v_per_cm,
                         const DefectTable& defects, const StarkOptions& options = {});

/// Least-squares fit of shift = -alpha F^2 / 2 over the sheet points with
/// 0 < F <= max_field. Throws DomainError when the sheet is missing or has
/// fewer than 3 such points, NumericalError when the relative residual
/// exceeds max_residual.
Polarizability polarizability(const RydbergLevel& level, const StarkMap& map,
                              double max_field_v_per_cm = 0.05, double max_residual = 0.02);

/// Default field grid for polarizability fits: 0 to 50 mV/cm in 2 mV/cm steps.
std::vector<double> default_polarizability_fields();

}  // namespace rydcpw::atoms
