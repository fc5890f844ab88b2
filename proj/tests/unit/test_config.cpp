#include <doctest.h>

#include <sstream>
#include <string>

#include "rydcpw/config.hpp"
#include "rydcpw/csv.hpp"
#include "rydcpw/error.hpp"
#include "rydcpw/parallel.hpp"
#include "rydcpw/random.hpp"

using namespace rydcpw;
using namespace rydcpw::config;

namespace {

std::string error_of(std::string_view text) {
  try {
    RunConfig::parse(text, "case.yaml");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("defaults") {
  const auto c = RunConfig::defaults();
  CHECK(c.stark.basis.n_min == 52);
  CHECK(c.stark.basis.n_max == 59);
  CHECK(c.stark.basis.m == 0);
  CHECK(c.stark.fields_v_per_cm.front() == 0.0);
  CHECK(c.stark.fields_v_per_cm.back() == doctest::Approx(2.0));
  CHECK(c.spectrum.temperatures_k.size() == 4);
  CHECK(c.rabi.durations_s.back() == doctest::Approx(1e-6));
  CHECK_FALSE(c.kappa_given);
  CHECK(c.geometry.center_width_m == 20e-6);
}

TEST_CASE("sections and sweeps") {
  const auto c = RunConfig::parse(R"(
stark:
  n_min: 54
  n_max: 57
  fields_v_per_cm: [0, 0.5, 1.0]
spectrum:
  temperatures_k: [3.65]
  offsets_hz: {start: -1.0e6, stop: 1.0e6, count: 5}
rabi:
  durations_s: {start: 0, stop: 1.0e-7, step: 2.5e-8}
  detunings_hz: 2.0e6
experiment:
  p_source_w: 12.6e-3
  kappa_hz_per_v2_m2: 7.5e4
  atom_motion: false
  ensemble: {n_samples: 10, seed: 4}
)",
                                   "inline.yaml");
  CHECK(c.stark.basis.n_min == 54);
  CHECK(c.stark.fields_v_per_cm == std::vector<double>{0, 0.5, 1.0});
  CHECK(c.spectrum.offsets_hz == std::vector<double>{-1e6, -5e5, 0, 5e5, 1e6});
  REQUIRE(c.rabi.durations_s.size() == 5);
  CHECK(c.rabi.durations_s[4] == doctest::Approx(1e-7));
  CHECK(c.rabi.detunings_hz == std::vector<double>{2e6});
  CHECK(c.kappa_given);
  CHECK(c.experiment.kappa == 7.5e4);
  CHECK_FALSE(c.experiment.atom_motion);
  CHECK(c.experiment.ensemble.n_samples == 10);
  CHECK(c.experiment.ensemble.seed == 4);
  CHECK(c.experiment.pulse_duration_s == 500e-9);  // untouched default
}

TEST_CASE("unknown keys are rejected with a location") {
  const auto msg = error_of("experiment:\n  p_source_w: 1e-3\n  p_sorce_w: 2e-3\n");
  CHECK(msg.find("case.yaml:3:") != std::string::npos);
  CHECK(msg.find("p_sorce_w") != std::string::npos);
  CHECK(msg.find("p_source_w") != std::string::npos);  // lists the allowed keys
  CHECK(error_of("bogus: 1\n").find("case.yaml:1:") != std::string::npos);
}

TEST_CASE("type and range errors") {
  CHECK(error_of("experiment:\n  p_source_w: lots\n").find("case.yaml:2:") != std::string::npos);
  CHECK(error_of("geometry:\n  center_width_m: -2.0e-5\n").find("width") != std::string::npos);
  CHECK(error_of("geometry:\n  gap_width_m: 0\n").find("gap") != std::string::npos);
  CHECK_FALSE(error_of("experiment:\n  ensemble: {fwhm_x_m: -1.0e-6}\n").empty());
  CHECK_FALSE(error_of("experiment:\n  pulse_duration_s: 0\n").empty());
  CHECK_FALSE(error_of("rabi:\n  durations_s: [1.0e-7, 0]\n").empty());
  CHECK_FALSE(error_of("spectrum:\n  offsets_hz: {start: 0, stop: 1, step: 0}\n").empty());
  CHECK_FALSE(error_of("stark:\n  n_min: 56\n  n_max: 57\n").empty());
  CHECK_FALSE(error_of("stark: [1, 2]\n").empty());
  CHECK_FALSE(error_of("experiment: {p_source_w: 1\n").empty());  // YAML syntax
}

TEST_CASE("missing config file is an I/O error") {
  CHECK_THROWS_AS(RunConfig::load("/nonexistent/run.yaml"), IoError);
}

TEST_CASE("data paths resolve relative to the config file") {
  const auto c = RunConfig::parse("data:\n  defects: d.txt\n  resonator: /abs/r.txt\n", "x.yaml", "/tmp/cfg");
  CHECK(c.defects_path == std::filesystem::path("/tmp/cfg/d.txt"));
  CHECK(c.resonator_path == std::filesystem::path("/abs/r.txt"));
}

TEST_CASE("shipped datasets load through the data directory") {
  const auto c = RunConfig::defaults();
  const auto defects = load_defects(c);
  const auto params = load_resonator(c);
  CHECK(defects.version() == "he4-triplet-1");
  CHECK(params.version == "nbn-cpw-table1-1");
  CHECK(std::filesystem::exists(data_directory() / "he_triplet_defects.txt"));
}

TEST_CASE("manifest hash") {
  const std::map<std::string, std::string> v{{"defects", "a"}, {"resonator", "b"}};
  const auto h = manifest_hash("spectrum", "x: 1\n", 7, v);
  CHECK(h.size() == 16);
  CHECK(h == manifest_hash("spectrum", "x: 1\n", 7, v));
  CHECK(h != manifest_hash("spectrum", "x: 2\n", 7, v));
  CHECK(h != manifest_hash("spectrum", "x: 1\n", 8, v));
  CHECK(h != manifest_hash("rabi", "x: 1\n", 7, v));
  auto v2 = v;
  v2["defects"] = "c";
  CHECK(h != manifest_hash("spectrum", "x: 1\n", 7, v2));
  // Length prefixes keep field boundaries unambiguous.
  CHECK(manifest_hash("ab", "c", 1, {}) != manifest_hash("a", "bc", 1, {}));
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);

  RunManifest m;
  m.command = "fieldmap";
  m.seed = 3;
  m.outputs = {"fieldmap.csv"};
  m.versions = v;
  m.hash = h;
  const auto json = m.to_json();
  CHECK(json.find("\"command\": \"fieldmap\"") != std::string::npos);
  CHECK(json.find("fieldmap.csv") != std::string::npos);
  CHECK(json.find(h) != std::string::npos);
}

TEST_CASE("CSV number formatting round-trips") {
  for (double v : {0.1, 1.0 / 3.0, 19.556499e9, -2.5e-12, 1e300}) {
    CHECK(std::stod(csv::format_double(v)) == v);
  }
  CHECK(csv::format_double(-0.0) == "0");
  std::istringstream in("# note\nx,y\n1,2\n3,4\n");
  const auto doc = csv::read(in, "mem");
  CHECK(doc.comments == std::vector<std::string>{"note"});
  CHECK(doc.column("y") == 1);
  CHECK(doc.column("z") == -1);
  CHECK(doc.rows.size() == 2);
  CHECK(doc.row_lines[1] == 4);
  CHECK_THROWS_AS(csv::to_double("abc", "mem", 3), ConfigError);
}

TEST_CASE("counter RNG and parallel helpers") {
  const CounterRng a(1, 2), b(1, 2), c(2, 2);
  CHECK(a.bits(5) == b.bits(5));
  CHECK(a.bits(5) != c.bits(5));
  double mean = 0.0;
  for (int i = 0; i < 100000; ++i) mean += a.uniform(i);
  CHECK(mean / 100000 == doctest::Approx(0.5).epsilon(0.01));

  std::vector<double> out(1000);
  parallel_for(out.size(), 7, [&](std::size_t i) { out[i] = a.uniform(i); });
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == a.uniform(i));
  CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i) {
                    if (i == 6) throw DomainError("boom");
                  }),
                  DomainError);
  std::vector<double> v(1001, 0.1);
  CHECK(pairwise_sum(v) == doctest::Approx(100.1).epsilon(1e-13));
}
