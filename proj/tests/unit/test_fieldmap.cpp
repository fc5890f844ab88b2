#include <doctest.h>

#include <cmath>
#include <sstream>

#include "rydcpw/constants.hpp"
#include "rydcpw/error.hpp"
#include "rydcpw/fieldmap.hpp"
#include "rydcpw/resonator.hpp"

using namespace rydcpw;
using namespace rydcpw::fieldmap;

namespace {

const CrossSectionField& solved() {
  static const CrossSectionField f = solve_cross_section();
  return f;
}

// Complete elliptic integral of the first kind via the arithmetic-geometric mean.
double ellint_k(double k) {
  double a = 1.0, b = std::sqrt(1.0 - k * k);
  while (std::abs(a - b) > 1e-16 * a) {
    const double an = 0.5 * (a + b);
    b = std::sqrt(a * b);
    a = an;
  }
  return constants::pi / (2.0 * a);
}

double conformal_oracle(const CpwGeometry& g) {
  const double k = g.center_width_m / (g.center_width_m + 2 * g.gap_width_m);
  const double kp = std::sqrt(1 - k * k);
  return 2 * constants::vacuum_permittivity * (g.substrate_permittivity + 1) * ellint_k(k) / ellint_k(kp);
}

}  // namespace

TEST_CASE("boundary potentials are imposed exactly") {
  const auto& f = solved();
  const auto& g = f.geometry();
  std::size_t j0 = f.ny();
  for (std::size_t j = 0; j < f.ny(); ++j)
    if (f.y()[j] == 0.0) j0 = j;
  REQUIRE(j0 < f.ny());
  int center = 0, ground = 0;
  for (std::size_t i = 0; i < f.nx(); ++i) {
    const double x = std::abs(f.x()[i]);
    const double v = f.potential()[j0 * f.nx() + i];
    if (x <= 0.5 * g.center_width_m) {
      CHECK(v == 1.0);
      ++center;
    } else if (x >= 0.5 * g.center_width_m + g.gap_width_m) {
      CHECK(v == 0.0);
      ++ground;
    }
  }
  CHECK(center > 10);
  CHECK(ground > 10);
  // Box walls.
  for (std::size_t i = 0; i < f.nx(); ++i) {
    CHECK(f.potential()[i] == 0.0);
    CHECK(f.potential()[(f.ny() - 1) * f.nx() + i] == 0.0);
  }
}

TEST_CASE("converged solve: residual, symmetry, non-negative field") {
  const auto& f = solved();
  CHECK(f.laplace_residual() < 1e-6);
  CHECK(f.mirror_asymmetry() < 1e-6);
  for (double v : f.e_mag()) CHECK(v >= 0.0);
  for (double y : {20e-6, 100e-6, 250e-6})
    for (double x : {15e-6, 60e-6, 180e-6}) CHECK(std::abs(f.e_mag_at(x, y) - f.e_mag_at(-x, y)) < 1e-6 * f.e_mag_at(0, y));
}

TEST_CASE("effective permittivity agrees with the conformal-mapping formula") {
  const auto& f = solved();
  const auto& g = f.geometry();
  CHECK(conformal_capacitance(g) == doctest::Approx(conformal_oracle(g)).epsilon(1e-12));
  CHECK(conformal_effective_permittivity(g) == doctest::Approx(6.45).epsilon(1e-14));
  CHECK(std::abs(f.effective_permittivity() / conformal_effective_permittivity(g) - 1) < 0.02);
  CHECK(std::abs(f.capacitance() / conformal_oracle(g) - 1) < 0.02);

  const auto wide = solve_cross_section(g.scaled(2.0));
  CHECK(std::abs(wide.effective_permittivity() / conformal_effective_permittivity(wide.geometry()) - 1) < 0.02);
  CHECK(std::abs(wide.capacitance() / conformal_oracle(wide.geometry()) - 1) < 0.02);
  CHECK(wide.laplace_residual() < 1e-6);
  CHECK(wide.mirror_asymmetry() < 1e-6);
}

TEST_CASE("field decays with height above the center conductor") {
  const auto& f = solved();
  CHECK(f.e_mag_at(0, 100e-6) < f.e_mag_at(0, 20e-6));
  double prev = f.e_mag_at(0, 30e-6);
  for (double y = 40e-6; y <= 1e-3; y += 10e-6) {
    const double e = f.e_mag_at(0, y);
    CHECK(e < prev);
    prev = e;
  }
  CHECK_THROWS_AS(f.e_mag_at(0, 1.0), DomainError);
}

TEST_CASE("grid refinement changes the reference field by under 2%") {
  const auto& f = solved();
  const auto fine = solve_cross_section(CpwGeometry{}, GridSpec{}.refined());
  CHECK(fine.nx() > f.nx());
  CHECK(std::abs(fine.e_mag_at(0, 100e-6) / f.e_mag_at(0, 100e-6) - 1) < 0.02);
}

TEST_CASE("field at a point along the resonator") {
  const auto& f = solved();
  const auto p = resonator::default_params();
  const double l = p.length_m;
  CHECK(std::abs(field_at(30e-6, 80e-6, 2 * l / 3, f, p, 1.0)) < 1e-12 * f.e_mag_at(30e-6, 80e-6));
  CHECK(field_at(30e-6, 80e-6, l / 3, f, p, 1.7) == doctest::Approx(1.7 * f.e_mag_at(30e-6, 80e-6)).epsilon(1e-14));
  CHECK(field_at(-10e-6, 150e-6, 0.4 * l, f, p, 2.0) ==
        doctest::Approx(2 * field_at(-10e-6, 150e-6, 0.4 * l, f, p, 1.0)).epsilon(1e-15));
  const double z1 = 0.2 * l, z2 = 0.9 * l;
  const double ref = field_at(0, 100e-6, z1, f, p, 1.0) / field_at(0, 100e-6, z2, f, p, 1.0);
  for (double x : {-100e-6, 0.0, 40e-6})
    for (double y : {20e-6, 100e-6, 300e-6})
      CHECK(field_at(x, y, z1, f, p, 1.0) / field_at(x, y, z2, f, p, 1.0) == doctest::Approx(ref).epsilon(1e-12));
  CHECK_THROWS_AS(field_at(0, 100e-6, 1.1 * l, f, p, 1.0), DomainError);
}

TEST_CASE("grid dump") {
  std::ostringstream out;
  solved().write_csv(out, 50e-6, 0.0, 100e-6);
  const auto text = out.str();
  CHECK(text.rfind("x_m,y_m,e_mag_per_volt", 0) == 0);
  CHECK(text.size() > 1000);
}

TEST_CASE("geometry validation") {
  CpwGeometry g;
  g.gap_width_m = 0.0;
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g = CpwGeometry{};
  g.center_width_m = -1e-6;
  CHECK_THROWS_AS(solve_cross_section(g), ConfigError);
  g = CpwGeometry{};
  g.box_height_m = 100e-6;
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g = CpwGeometry{};
  g.substrate_permittivity = 0.5;
  CHECK_THROWS_AS(g.validate(), ConfigError);
}

TEST_CASE("ensemble statistics") {
  EnsembleSpec spec;
  spec.n_samples = 100000;
  spec.seed = 42;
  const auto atoms = sample_ensemble(spec);
  REQUIRE(atoms.size() == spec.n_samples);
  double sx = 0, sy = 0, sxx = 0, zmin = 1, zmax = -1;
  for (const auto& a : atoms) {
    sx += a.x_m;
    sy += a.y_m;
    sxx += a.x_m * a.x_m;
    zmin = std::min(zmin, a.z_offset_m);
    zmax = std::max(zmax, a.z_offset_m);
  }
  const double n = double(atoms.size());
  const double mean_x = sx / n;
  CHECK(std::abs(sy / n - 100e-6) < 1e-6);
  CHECK(std::sqrt(sxx / n - mean_x * mean_x) == doctest::Approx(100e-6 / 2.3548).epsilon(0.02));
  CHECK(zmin >= -0.5 * spec.bunch_length_m);
  CHECK(zmax <= 0.5 * spec.bunch_length_m);
  CHECK(zmax - zmin > 0.99 * spec.bunch_length_m);
}

TEST_CASE("ensemble determinism and degenerate widths") {
  EnsembleSpec spec;
  spec.n_samples = 500;
  const auto a = sample_ensemble(spec);
  const auto b = sample_ensemble(spec);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].x_m == b[i].x_m);
    CHECK(a[i].y_m == b[i].y_m);
    CHECK(a[i].z_offset_m == b[i].z_offset_m);
    const auto single = sample_atom(spec, i);
    CHECK(single.y_m == a[i].y_m);
  }
  spec.seed = 2;
  CHECK(sample_ensemble(spec)[0].x_m != a[0].x_m);

  EnsembleSpec point;
  point.n_samples = 1;
  point.fwhm_x_m = point.fwhm_y_m = point.bunch_length_m = 0.0;
  const auto one = sample_ensemble(point);
  REQUIRE(one.size() == 1);
  CHECK(one[0].x_m == 0.0);
  CHECK(one[0].y_m == point.center_height_m);
  CHECK(one[0].z_offset_m == 0.0);

  EnsembleSpec bad;
  bad.fwhm_x_m = -1e-6;
  CHECK_THROWS_AS(sample_ensemble(bad), ConfigError);
  bad = EnsembleSpec{};
  bad.n_samples = 0;
  CHECK_THROWS_AS(sample_ensemble(bad), ConfigError);
}
