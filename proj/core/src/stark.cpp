#include "rydcpw/stark.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <tuple>

#include "rydcpw/constants.hpp"
#include "rydcpw/error.hpp"
#include "rydcpw/parallel.hpp"
#include "rydcpw/csv.hpp"

namespace rydcpw::atoms {

namespace {

double angular_factor(int l_upper, int m) {
  const double l = l_upper;
  return std::sqrt((l * l - double(m) * m) / ((2.0 * l + 1.0) * (2.0 * l - 1.0)));
}

struct Diagonalized {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};

}  // namespace

std::string level_label(int n, int l) {
  static constexpr char letters[] = "spdfghi";
  if (l >= 0 && l < 7) return std::to_string(n) + letters[l];
  return std::to_string(n) + "l" + std::to_string(l);
}

int StarkMap::index_of(int n, int l) const {
  for (std::size_t i = 0; i < basis.size(); ++i) {
    if (basis[i].n == n && basis[i].l == l) return static_cast<int>(i);
  }
  return -1;
}

std::vector<double> StarkMap::sheet(int basis_index) const {
  std::vector<double> out;
  out.reserve(fields_v_per_cm.size());
  for (std::size_t f = 0; f < eigenvalues.size(); ++f) {
    const auto& lab = labels[f];
    const auto it = std::find(lab.begin(), lab.end(), basis_index);
    if (it == lab.end()) throw DomainError("StarkMap::sheet: label missing at field index " + std::to_string(f));
    out.push_back(eigenvalues[f][static_cast<std::size_t>(it - lab.begin())]);
  }
  return out;
}

double StarkMap::max_sheet_jump_hz(int basis_index) const {
  const auto s = sheet(basis_index);
  double jump = 0.0;
  for (std::size_t i = 1; i < s.size(); ++i) jump = std::max(jump, std::abs(s[i] - s[i - 1]));
  return jump;
}

double StarkMap::max_jump_hz() const {
  double jump = 0.0;
  for (std::size_t k = 0; k < basis.size(); ++k) {
    jump = std::max(jump, max_sheet_jump_hz(static_cast<int>(k)));
  }
  return jump;
}

void StarkMap::write_csv(std::ostream& out) const {
  out << "field_v_per_cm,sheet_label,energy_hz\n";
  for (std::size_t f = 0; f < eigenvalues.size(); ++f) {
    // rows sorted by label for stable diffs
    std::vector<std::pair<int, double>> rows;
    rows.reserve(eigenvalues[f].size());
    for (std::size_t j = 0; j < eigenvalues[f].size(); ++j) rows.emplace_back(labels[f][j], eigenvalues[f][j]);
    std::sort(rows.begin(), rows.end());
    for (const auto& [label, energy] : rows) {
      const auto& lvl = basis[static_cast<std::size_t>(label)];
      out << csv::format_double(fields_v_per_cm[f]) << ',' << level_label(lvl.n, lvl.l) << ','
          << csv::format_double(energy) << '\n';
    }
  }
}

std::vector<RydbergLevel> make_stark_basis(const StarkBasisSpec& spec, const DefectTable& defects) {
  if (spec.n_min < 1 || spec.n_max < spec.n_min) throw DomainError("Stark basis: empty n range");
  std::vector<RydbergLevel> basis;
  const int abs_m = std::abs(spec.m);
  for (int n = spec.n_min; n <= spec.n_max; ++n) {
    const int l_top = spec.l_max < 0 ? n - 1 : std::min(n - 1, spec.l_max);
    for (int l = abs_m; l <= l_top; ++l) basis.push_back(make_level(n, l, spec.m, defects));
  }
  if (basis.empty()) throw DomainError("Stark basis: no states for the requested m and l range");
  return basis;
}

Eigen::MatrixXd stark_dipole_matrix(std::span<const RydbergLevel> basis, const RadialOptions& radial) {
  const auto size = static_cast<Eigen::Index>(basis.size());
  std::map<std::pair<int, int>, RadialWavefunction> cache;
  for (const auto& level : basis) {
    cache.try_emplace({level.n, level.l}, solve_radial(level.n_star, level.l, radial));
  }
  // Hartree * a0 * F_au: <z> in a.u. times field in a.u. gives energy in Hartree.
  const double scale = constants::hartree_hz / constants::atomic_field_v_per_cm;
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(size, size);
  for (Eigen::Index i = 0; i < size; ++i) {
    const auto& a = basis[static_cast<std::size_t>(i)];
    for (Eigen::Index j = i + 1; j < size; ++j) {
      const auto& b = basis[static_cast<std::size_t>(j)];
      if (a.m != b.m || std::abs(a.l - b.l) != 1) continue;
      const double radial_part =
          radial_integral(cache.at({a.n, a.l}), cache.at({b.n, b.l}), 1);
      const double value = radial_part * angular_factor(std::max(a.l, b.l), a.m) * scale;
      d(i, j) = value;
      d(j, i) = value;
    }
  }
  return d;
}

Eigen::MatrixXd stark_hamiltonian(std::span<const RydbergLevel> basis, const Eigen::MatrixXd& dipole,
                                  double field_v_per_cm) {
  Eigen::MatrixXd h = field_v_per_cm * dipole;
  for (std::size_t i = 0; i < basis.size(); ++i) {
    h(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += basis[i].energy_hz;
  }
  return h;
}

StarkMap diagonalize_stark(std::vector<RydbergLevel> basis, const Eigen::MatrixXd& dipole,
                           std::span<const double> fields, int threads) {
  if (basis.empty()) throw DomainError("Stark map: empty basis");
  if (fields.empty()) throw DomainError("Stark map: empty field list");
  const auto size = static_cast<Eigen::Index>(basis.size());
  if (dipole.rows() != size || dipole.cols() != size) throw DomainError("Stark map: dipole matrix size mismatch");
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (!(fields[i] >= 0.0) || !std::isfinite(fields[i])) throw DomainError("Stark map: fields must be finite and non-negative");
    if (i > 0 && !(fields[i] > fields[i - 1])) throw DomainError("Stark map: fields must be strictly ascending");
  }

  // Diagonalize relative to the mean energy to keep the spectral range small.
  double offset = 0.0;
  for (const auto& lvl : basis) offset += lvl.energy_hz;
  offset /= static_cast<double>(basis.size());
  Eigen::MatrixXd h0 = Eigen::MatrixXd::Zero(size, size);
  for (Eigen::Index i = 0; i < size; ++i) h0(i, i) = basis[static_cast<std::size_t>(i)].energy_hz - offset;

  StarkMap map;
  map.fields_v_per_cm.assign(fields.begin(), fields.end());
  map.eigenvalues.resize(fields.size());
  map.labels.resize(fields.size());

  Eigen::MatrixXd previous = Eigen::MatrixXd::Identity(size, size);
  Eigen::VectorXd previous_energy(size);
  for (Eigen::Index i = 0; i < size; ++i) previous_energy(i) = h0(i, i);
  // previous_label[j]: basis label of column j of `previous`
  std::vector<int> previous_label(static_cast<std::size_t>(size));
  for (Eigen::Index i = 0; i < size; ++i) previous_label[static_cast<std::size_t>(i)] = static_cast<int>(i);

  const std::size_t batch = static_cast<std::size_t>(std::max(threads, 1));
  for (std::size_t start = 0; start < fields.size(); start += batch) {
    const std::size_t count = std::min(batch, fields.size() - start);
    std::vector<Diagonalized> results(count);
    parallel_for(count, threads, [&](std::size_t k) {
      const Eigen::MatrixXd h = h0 + fields[start + k] * dipole;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(h);
      if (solver.info() != Eigen::Success) {
        throw NumericalError("Stark map: diagonalization failed at F=" + std::to_string(fields[start + k]) + " V/cm");
      }
      results[k] = {solver.eigenvalues(), solver.eigenvectors()};
    });

    for (std::size_t k = 0; k < count; ++k) {
      const auto& current = results[k];
      const Eigen::MatrixXd overlap = (previous.transpose() * current.vectors).cwiseAbs();
      struct Candidate {
        double overlap;
        double gap;
        Eigen::Index prev;
        Eigen::Index cur;
      };
      std::vector<Candidate> candidates;
      candidates.reserve(static_cast<std::size_t>(size * size));
      for (Eigen::Index p = 0; p < size; ++p) {
        for (Eigen::Index c = 0; c < size; ++c) {
          candidates.push_back({overlap(p, c), std::abs(current.values(c) - previous_energy(p)), p, c});
        }
      }
      std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.overlap != b.overlap) return a.overlap > b.overlap;
        if (a.gap != b.gap) return a.gap < b.gap;
        return std::tie(a.prev, a.cur) < std::tie(b.prev, b.cur);
      });
      std::vector<char> prev_used(static_cast<std::size_t>(size), 0), cur_used(static_cast<std::size_t>(size), 0);
      std::vector<int> label(static_cast<std::size_t>(size), -1);
      Eigen::Index assigned = 0;
      for (const auto& cand : candidates) {
        if (prev_used[static_cast<std::size_t>(cand.prev)] || cur_used[static_cast<std::size_t>(cand.cur)]) continue;
        prev_used[static_cast<std::size_t>(cand.prev)] = 1;
        cur_used[static_cast<std::size_t>(cand.cur)] = 1;
        label[static_cast<std::size_t>(cand.cur)] = previous_label[static_cast<std::size_t>(cand.prev)];
        if (++assigned == size) break;
      }

      const std::size_t f = start + k;
      map.eigenvalues[f].resize(static_cast<std::size_t>(size));
      for (Eigen::Index j = 0; j < size; ++j) map.eigenvalues[f][static_cast<std::size_t>(j)] = current.values(j) + offset;
      map.labels[f] = label;

      previous = current.vectors;
      previous_energy = current.values;
      previous_label = label;
    }
  }
  map.basis = std::move(basis);
  return map;
}

StarkMap build_stark_map(const StarkBasisSpec& spec, std::span<const double> fields,
                         const DefectTable& defects, const StarkOptions& options) {
  auto basis = make_stark_basis(spec, defects);
  const Eigen::MatrixXd dipole = stark_dipole_matrix(basis, options.radial);
  return diagonalize_stark(std::move(basis), dipole, fields, options.threads);
}

Polarizability polarizability(const RydbergLevel& level, const StarkMap& map, double max_field,
                              double max_residual) {
  const int index = map.index_of(level.n, level.l);
  if (index < 0 || map.basis[static_cast<std::size_t>(index)].m != level.m) {
    throw DomainError("polarizability: sheet " + level_label(level.n, level.l) + " not in Stark map");
  }
  const auto energies = map.sheet(index);
  const double zero_field = map.basis[static_cast<std::size_t>(index)].energy_hz;
  double sff = 0.0;
  double sfs = 0.0;
  int points = 0;
  for (std::size_t i = 0; i < energies.size(); ++i) {
    const double f = map.fields_v_per_cm[i];
    if (f <= 0.0 || f > max_field) continue;
    const double shift = energies[i] - zero_field;
    const double f2 = f * f;
    sff += f2 * f2;
    sfs += f2 * shift;
    ++points;
  }
  if (points < 3) throw DomainError("polarizability: fewer than 3 field points in (0, max_field]");
  const double slope = sfs / sff;  // shift = slope * F^2
  double res2 = 0.0;
  double sig2 = 0.0;
  for (std::size_t i = 0; i < energies.size(); ++i) {
    const double f = map.fields_v_per_cm[i];
    if (f <= 0.0 || f > max_field) continue;
    const double shift = energies[i] - zero_field;
    res2 += (shift - slope * f * f) * (shift - slope * f * f);
    sig2 += shift * shift;
  }
  Polarizability result;
  result.level = map.basis[static_cast<std::size_t>(index)];
  result.alpha_ghz = -2.0 * slope / 1e9;
  result.residual = sig2 > 0.0 ? std::sqrt(res2 / sig2) : 0.0;
  result.points = points;
  if (result.residual > max_residual) {
    throw NumericalError("polarizability: relative residual " + std::to_string(result.residual) +
                         " exceeds " + std::to_string(max_residual) + " (field range not quadratic)");
  }
  return result;
}

std::vector<double> default_polarizability_fields() {
  std::vector<double> fields;
  for (int i = 0; i <= 25; ++i) fields.push_back(0.002 * i);
  return fields;
}

}  // namespace rydcpw::atoms
