#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rydcpw/atoms.hpp"
#include "rydcpw/constants.hpp"
#include "rydcpw/error.hpp"
#include "rydcpw/radial.hpp"
#include "rydcpw/stark.hpp"

using namespace rydcpw;
using namespace rydcpw::atoms;

namespace {

const DefectTable& shipped() {
  static const DefectTable table = DefectTable::load(RYDCPW_TEST_DATA_DIR "/he_triplet_defects.txt");
  return table;
}

// 55s/56s weak-field map over the default n = 52-59 basis; built once.
const StarkMap& weak_field_map() {
  static const StarkMap map = [] {
    const auto fields = default_polarizability_fields();
    StarkOptions opt;
    opt.threads = 4;
    return build_stark_map(StarkBasisSpec{}, fields, shipped(), opt);
  }();
  return map;
}

// Closed-form hydrogen integrals: <1s|r|np>^2 = 2^8 n^7 (n-1)^(2n-5) / (n+1)^(2n+5)
// and the intra-manifold <n,l|r|n,l-1> = (3/2) n sqrt(n^2 - l^2).
double hydrogen_1s_np(int n) {
  const double nn = n;
  const double log_sq = 8 * std::log(2.0) + 7 * std::log(nn) + (2 * nn - 5) * std::log(nn - 1) -
                        (2 * nn + 5) * std::log(nn + 1);
  return std::exp(0.5 * log_sq);
}

}  // namespace

TEST_CASE("shipped table reproduces the anchored s defects") {
  CHECK(shipped().defect(55, 0) == doctest::Approx(0.2966693).epsilon(1e-9));
  CHECK(shipped().defect(56, 0) == doctest::Approx(0.2966688).epsilon(1e-9));
  const auto level = make_level(55, 0, 0, shipped());
  CHECK(level.n_star == level.n - level.defect);
  CHECK(level.n_star == doctest::Approx(54.7033307).epsilon(1e-9));
  CHECK(level.energy_hz == doctest::Approx(-shipped().rydberg_hz() / (level.n_star * level.n_star)).epsilon(1e-15));
}

TEST_CASE("defects decrease with l and vanish above the cutoff") {
  double prev = 1.0;
  for (int l = 0; l < 8; ++l) {
    const double d = shipped().defect(60, l);
    CHECK(d <= prev);
    CHECK(d >= 0.0);
    prev = d;
  }
  CHECK(shipped().defect(60, 6) == 0.0);
}

TEST_CASE("helium Rydberg constant carries the reduced-mass correction") {
  const double me = constants::electron_mass_u;
  const double core = constants::helium4_atomic_mass_u - me;
  CHECK(shipped().rydberg_hz() == doctest::Approx(constants::rydberg_infinity_hz * core / (core + me)).epsilon(1e-13));
  CHECK(shipped().rydberg_hz() == doctest::Approx(3289391068396472.5).epsilon(1e-15));
}

TEST_CASE("hydrogenic n = 2 energy") {
  const auto h = DefectTable::hydrogenic();
  CHECK(level_energy(2, 0, h) == doctest::Approx(-h.rydberg_hz() / 4.0).epsilon(1e-15));
}

TEST_CASE("two-photon half frequency from the Ritz formula") {
  // Independent evaluation of the two anchored n* values.
  const double r = constants::helium4_rydberg_hz();
  const double a = 55 - 0.2966693, b = 56 - 0.2966688;
  const double oracle = 0.5 * r * (1.0 / (a * a) - 1.0 / (b * b));
  const auto s55 = make_level(55, 0, 0, shipped());
  const auto s56 = make_level(56, 0, 0, shipped());
  const double nu = transition_frequency(s55, s56);
  CHECK(nu / 2 == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(std::abs(nu / 2 - 19.556499e9) < 2e6);
  CHECK(nu == doctest::Approx(39.113e9).epsilon(1e-4));
  CHECK(transition_frequency(s55, s55) == 0.0);
  CHECK(transition_frequency(s56, s55) == -nu);
}

TEST_CASE("missing defect below the cutoff is a configuration error") {
  std::istringstream in(
      "format = rydcpw-defects\nversion = t\nrydberg_constant_hz = 3.2e15\nseries = triplet\n"
      "cutoff_l = 3\ntriplet.0 = 0.3 | test\n");
  const auto table = DefectTable::parse(in, "inline");
  CHECK(table.defect(40, 0) == doctest::Approx(0.3));
  CHECK_THROWS_AS(table.defect(40, 1), ConfigError);
  CHECK(table.defect(40, 3) == 0.0);

  std::istringstream bad(
      "format = rydcpw-defects\nversion = t\nrydberg_constant_hz = 3.2e15\nseries = triplet\n"
      "cutoff_l = 1\ntriplet.0 = 1.2 | test\n");
  CHECK_THROWS_AS(DefectTable::parse(bad, "inline"), ConfigError);
}

TEST_CASE("hydrogen radial integrals match closed forms for n <= 10") {
  const auto h = DefectTable::hydrogenic();
  const auto s1 = make_level(1, 0, 0, h);
  CHECK(std::abs(radial_matrix_element(s1, make_level(2, 1, 0, h))) == doctest::Approx(1.2902).epsilon(1e-4));
  for (int n = 2; n <= 10; ++n) {
    const double v = std::abs(radial_matrix_element(s1, make_level(n, 1, 0, h)));
    CHECK(v == doctest::Approx(hydrogen_1s_np(n)).epsilon(1e-4));
  }
  for (int n = 2; n <= 10; ++n) {
    for (int l = 1; l < n; ++l) {
      const double v = std::abs(radial_matrix_element(make_level(n, l, 0, h), make_level(n, l - 1, 0, h)));
      CHECK(v == doctest::Approx(1.5 * n * std::sqrt(double(n * n - l * l))).epsilon(1e-4));
    }
  }
}

TEST_CASE("radial matrix element is symmetric and enforces the selection rule") {
  const auto s = make_level(55, 0, 0, shipped());
  const auto p = make_level(55, 1, 0, shipped());
  const auto d = make_level(55, 2, 0, shipped());
  CHECK(radial_matrix_element(s, p) == doctest::Approx(radial_matrix_element(p, s)).epsilon(1e-14));
  CHECK_THROWS_AS(radial_matrix_element(s, d), DomainError);
  CHECK_THROWS_AS(radial_matrix_element(s, s), DomainError);
}

TEST_CASE("55s-55p matrix element is converged in the grid step") {
  const auto s = make_level(55, 0, 0, shipped());
  const auto p = make_level(55, 1, 0, shipped());
  RadialOptions fine;
  fine.step = 0.0025;
  fine.r_floor = 1e-5;
  fine.outer_margin = 30.0;
  const double coarse = radial_matrix_element(s, p);
  const double reference = radial_matrix_element(s, p, fine);
  CHECK(std::abs(coarse / reference - 1.0) < 1e-4);
}

TEST_CASE("two-photon Stark shift examples") {
  CHECK(two_photon_stark_shift(0.0, 1.95545, 2.20211) == 0.0);
  CHECK(two_photon_stark_shift(0.05, 1.95545, 2.20211) == doctest::Approx(-154.2e3).epsilon(2e-3));
  CHECK(two_photon_stark_shift(0.12, 1.95545, 2.20211) == doctest::Approx(-888e3).epsilon(2e-3));
  // Relative to the single-level 55s shift -alpha F^2 / 2.
  for (double f : {0.01, 0.03, 0.05}) {
    const double ratio = two_photon_stark_shift(f, 1.95545, 2.20211) / (-0.5 * 1.95545e9 * f * f);
    CHECK(ratio == doctest::Approx(0.0631).epsilon(5e-3));
  }
}

TEST_CASE("classical ionization field") {
  RydbergLevel a;
  a.n_star = 54.703;
  RydbergLevel b;
  b.n_star = 55.703;
  RydbergLevel c;
  c.n_star = 2 * 54.703;
  const double fa = classical_ionization_field(a);
  const double expected = constants::atomic_field_v_per_cm / (16 * std::pow(54.703, 4));
  CHECK(fa == doctest::Approx(expected).epsilon(1e-12));
  CHECK(fa == doctest::Approx(36.0).epsilon(0.02));
  CHECK(classical_ionization_field(b) < fa);
  CHECK(fa / classical_ionization_field(c) == doctest::Approx(16.0).epsilon(1e-12));
}

TEST_CASE("Stark basis and dipole matrix") {
  StarkBasisSpec spec{4, 6, -1, 0};
  const auto basis = make_stark_basis(spec, DefectTable::hydrogenic());
  CHECK(basis.size() == 4 + 5 + 6);
  const auto d = stark_dipole_matrix(basis);
  CHECK((d - d.transpose()).cwiseAbs().maxCoeff() == 0.0);
  for (std::size_t i = 0; i < basis.size(); ++i) {
    for (std::size_t j = 0; j < basis.size(); ++j) {
      if (std::abs(basis[i].l - basis[j].l) != 1) CHECK(d(i, j) == 0.0);
    }
  }
  CHECK_THROWS_AS(build_stark_map(StarkBasisSpec{6, 5, -1, 0}, std::vector<double>{0.0}, DefectTable::hydrogenic()),
                  Error);
  CHECK_THROWS_AS(build_stark_map(spec, std::vector<double>{0.1, 0.0}, DefectTable::hydrogenic()), Error);
}

TEST_CASE("hydrogenic Stark fan is linear with slope 3/2 n (n-1)") {
  StarkBasisSpec spec{4, 6, -1, 0};
  const std::vector<double> fields{0.0, 10.0};
  const auto map = build_stark_map(spec, fields, DefectTable::hydrogenic());
  REQUIRE(map.eigenvalues.size() == 2);
  REQUIRE(map.eigenvalues[1].size() == 15);
  const double per_au = constants::hartree_hz / constants::atomic_field_v_per_cm;  // Hz per (V/cm) per a.u.
  const double slope = 1.5 * 6 * 5 * per_au;
  const auto& e0 = map.eigenvalues[0];
  const auto& e1 = map.eigenvalues[1];
  // n = 6 occupies the top six eigenvalues.
  CHECK((e1[14] - e0[14]) / 10.0 == doctest::Approx(slope).epsilon(1e-3));
  CHECK((e1[9] - e0[9]) / 10.0 == doctest::Approx(-slope).epsilon(1e-3));
}

TEST_CASE("two-level polarizability oracle") {
  const auto h = DefectTable::hydrogenic();
  std::vector<RydbergLevel> basis{make_level(30, 0, 0, h), make_level(30, 1, 0, h)};
  const double gap = 1e12;
  const double d = 1e9;
  basis[1].energy_hz = basis[0].energy_hz + gap;
  Eigen::MatrixXd dip(2, 2);
  dip << 0.0, d, d, 0.0;
  const auto fields = default_polarizability_fields();
  const auto map = diagonalize_stark(basis, dip, fields);
  const auto pol = polarizability(basis[0], map);
  CHECK(pol.alpha_ghz == doctest::Approx(2 * d * d / gap / 1e9).epsilon(1e-5));
  CHECK(pol.points == 25);
}

TEST_CASE("zero-field eigenvalues equal the level energies") {
  const auto& map = weak_field_map();
  REQUIRE(map.fields_v_per_cm.front() == 0.0);
  for (std::size_t f = 0; f < map.eigenvalues.size(); ++f) CHECK(map.eigenvalues[f].size() == map.basis.size());
  std::vector<double> energies;
  for (const auto& b : map.basis) energies.push_back(b.energy_hz);
  for (std::size_t j = 0; j < map.basis.size(); ++j) {
    const double e = map.eigenvalues[0][j];
    const int label = map.labels[0][j];
    CHECK(std::abs(e - map.basis[label].energy_hz) <= 1e3);
  }
}

TEST_CASE("55s and 56s polarizabilities") {
  const auto& map = weak_field_map();
  const auto s55 = make_level(55, 0, 0, shipped());
  const auto s56 = make_level(56, 0, 0, shipped());
  const auto a55 = polarizability(s55, map);
  const auto a56 = polarizability(s56, map);
  MESSAGE("alpha 55s = " << a55.alpha_ghz << ", 56s = " << a56.alpha_ghz);
  CHECK(a55.alpha_ghz > 0.0);
  CHECK(a56.alpha_ghz > a55.alpha_ghz);
  CHECK(std::abs(a55.alpha_ghz / 1.95545 - 1.0) < 0.05);
  CHECK(std::abs(a56.alpha_ghz / 2.20211 - 1.0) < 0.05);
  CHECK(a55.residual < 0.02);

  // Sheets are continuous across the weak-field grid.
  CHECK(map.max_sheet_jump_hz(map.index_of(55, 0)) < 1e6);
  CHECK(map.max_sheet_jump_hz(map.index_of(56, 0)) < 1e6);

  // Differential shift relative to the single-level shift.
  const auto sheet55 = map.sheet(map.index_of(55, 0));
  const auto sheet56 = map.sheet(map.index_of(56, 0));
  const double expected = (a56.alpha_ghz - a55.alpha_ghz) / (2 * a55.alpha_ghz);
  for (std::size_t f = 5; f < sheet55.size(); f += 5) {
    const double single = sheet55[f] - sheet55[0];
    const double diff = 0.5 * ((sheet56[f] - sheet56[0]) - single);
    CHECK(diff / single == doctest::Approx(expected).epsilon(0.02));
  }
}

TEST_CASE("polarizability rejects missing sheets") {
  const auto& map = weak_field_map();
  CHECK_THROWS_AS(polarizability(make_level(70, 0, 0, shipped()), map), DomainError);
  const std::vector<double> two{0.0, 0.01};
  const auto tiny = build_stark_map(StarkBasisSpec{54, 56, 3, 0}, two, shipped());
  CHECK_THROWS_AS(polarizability(make_level(55, 0, 0, shipped()), tiny), DomainError);
}

TEST_CASE("basis growth changes the polarizabilities by under 1%") {
  const auto fields = default_polarizability_fields();
  StarkOptions opt;
  opt.threads = 4;
  const auto wide = build_stark_map(StarkBasisSpec{51, 60, -1, 0}, fields, shipped(), opt);
  for (int n : {55, 56}) {
    const auto level = make_level(n, 0, 0, shipped());
    const double narrow_alpha = polarizability(level, weak_field_map()).alpha_ghz;
    const double wide_alpha = polarizability(level, wide).alpha_ghz;
    CHECK(std::abs(wide_alpha / narrow_alpha - 1.0) < 0.01);
  }
}

TEST_CASE("Stark map does not depend on the thread count") {
  const std::vector<double> fields{0.0, 0.5, 1.0, 1.5, 2.0};
  StarkOptions one, four;
  four.threads = 4;
  const StarkBasisSpec spec{54, 56, -1, 0};
  const auto a = build_stark_map(spec, fields, shipped(), one);
  const auto b = build_stark_map(spec, fields, shipped(), four);
  CHECK(a.eigenvalues == b.eigenvalues);
  CHECK(a.labels == b.labels);
}

TEST_CASE("Stark map CSV export") {
  const std::vector<double> fields{0.0, 0.1};
  const auto map = build_stark_map(StarkBasisSpec{55, 55, 2, 0}, fields, shipped());
  std::ostringstream out;
  map.write_csv(out);
  const std::string text = out.str();
  CHECK(text.rfind("field_v_per_cm,sheet_label,energy_hz", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 2 * 3);
  CHECK(text.find("55s") != std::string::npos);
  CHECK(level_label(57, 9) == "57l9");
}
