// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
// failure. Tolerances are fixed here and not configurable.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "rydcpw/atoms.hpp"
#include "rydcpw/circlefit.hpp"
#include "rydcpw/config.hpp"
#include "rydcpw/constants.hpp"
#include "rydcpw/dynamics.hpp"
#include "rydcpw/fieldmap.hpp"
#include "rydcpw/random.hpp"
#include "rydcpw/resonator.hpp"
#include "rydcpw/stark.hpp"

using namespace rydcpw;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int hw_threads() { return std::max(1u, std::min(8u, std::thread::hardware_concurrency())); }

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    detail << (detail.tellp() > 0 ? "; " : "") << what << (ok ? "" : " [x]");
  }
};

std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

const dynamics::SharedModels& shared_models() {
  static const dynamics::SharedModels m = [] {
    dynamics::SharedModels s;
    s.resonator = config::load_resonator(config::RunConfig::defaults());
    s.cross = fieldmap::solve_cross_section();
    return s;
  }();
  return m;
}

double kappa_for(const config::RunConfig& cfg, const dynamics::SharedModels& m) {
  auto ref = cfg.experiment;
  ref.p_source_w = cfg.calibration.p_source_w;
  ref.t_cpw_k = cfg.calibration.t_cpw_k;
  return dynamics::calibrate_kappa(cfg.calibration.target_rabi_hz, ref, m, cfg.calibration.point);
}

// 1. Two-photon half frequency from the Ritz formula.
void half_frequency(Outcome& o) {
  const auto t0 = Clock::now();
  const auto defects = config::load_defects(config::RunConfig::defaults());
  const auto s55 = atoms::make_level(55, 0, 0, defects);
  const auto s56 = atoms::make_level(56, 0, 0, defects);
  const double half = atoms::transition_frequency(s55, s56) / 2.0;
  const double dt = seconds_since(t0);
  o.require(std::abs(s55.defect - 0.2966693) < 1e-9 && std::abs(s56.defect - 0.2966688) < 1e-9,
            "defects 55s/56s = " + fmt(s55.defect, 8) + "/" + fmt(s56.defect, 8));
  o.require(std::abs(half - 19.556499e9) <= 2e6,
            "nu/2 = " + fmt(half, 11) + " Hz (|diff| " + fmt(std::abs(half - 19.556499e9), 3) + " Hz <= 2 MHz)");
  o.require(dt < 1.0, "runtime " + fmt(dt, 3) + " s < 1 s");
}

// 2. Polarizabilities from the n = 52-59, m = 0 Stark map.
void polarizabilities(Outcome& o) {
  const auto t0 = Clock::now();
  const auto defects = config::load_defects(config::RunConfig::defaults());
  const auto fields = atoms::default_polarizability_fields();
  atoms::StarkOptions opt;
  opt.threads = hw_threads();
  const auto map = atoms::build_stark_map(atoms::StarkBasisSpec{52, 59, -1, 0}, fields, defects, opt);
  const auto a55 = atoms::polarizability(atoms::make_level(55, 0, 0, defects), map);
  const auto a56 = atoms::polarizability(atoms::make_level(56, 0, 0, defects), map);
  const double dt = seconds_since(t0);
  const double r55 = a55.alpha_ghz / 1.95545 - 1.0;
  const double r56 = a56.alpha_ghz / 2.20211 - 1.0;
  o.require(std::abs(r55) <= 0.05, "alpha(55s) = " + fmt(a55.alpha_ghz) + " GHz/(V/cm)^2 (" + fmt(100 * r55, 3) + "%)");
  o.require(std::abs(r56) <= 0.05, "alpha(56s) = " + fmt(a56.alpha_ghz) + " GHz/(V/cm)^2 (" + fmt(100 * r56, 3) + "%)");
  o.require(dt < 120.0, "basis " + std::to_string(map.basis.size()) + " states, runtime " + fmt(dt, 3) + " s < 120 s");
}

// 3. Linewidth and ring-down at 3.65 K.
void linewidth(Outcome& o) {
  const auto params = config::load_resonator(config::RunConfig::defaults());
  const auto row = params.at(3.65);
  const double fwhm = row.nu3_hz / row.q_loaded;
  const double tau = resonator::ringdown_time(3.65, params);
  o.require(std::abs(fwhm / 8.5e6 - 1) <= 0.02, "nu3/Q_loaded = " + fmt(fwhm / 1e6, 4) + " MHz vs 8.5 MHz");
  o.require(std::abs(tau / 18.4e-9 - 1) <= 0.02, "tau = " + fmt(tau * 1e9, 4) + " ns vs 18.4 ns");
}

// 4. Circle-fit round trip, noiseless and at 20 dB.
void circle_fit(Outcome& o) {
  const auto t0 = Clock::now();
  const auto params = config::load_resonator(config::RunConfig::defaults());
  const resonator::Environment env{1.0, 0.3, 1e-9};
  const int trials = 100;
  double worst_f = 0, worst_q = 0, worst_rms = 0;
  for (const auto& row : params.temp_table) {
    const auto grid = resonator::linewidth_grid(params, row.temperature_k, 6.0, 10001);
    const auto clean = circlefit::extract_q(resonator::synth_s21(params, row.temperature_k, grid, env));
    worst_f = std::max(worst_f, std::abs(clean.f_r_hz - row.nu3_hz));
    worst_q = std::max({worst_q, std::abs(clean.q_loaded / row.q_loaded - 1), std::abs(clean.q_int / row.q_int - 1)});
    double sq_l = 0, sq_i = 0;
    for (int i = 0; i < trials; ++i) {
      const std::uint64_t seed = 7000 + 1000 * static_cast<std::uint64_t>(&row - params.temp_table.data()) + i;
      const auto fit = circlefit::extract_q(
          resonator::synth_s21(params, row.temperature_k, grid, env, resonator::NoiseSpec{20.0, seed}));
      sq_l += std::pow(fit.q_loaded / row.q_loaded - 1, 2);
      sq_i += std::pow(fit.q_int / row.q_int - 1, 2);
    }
    const double rms = std::max(std::sqrt(sq_l / trials), std::sqrt(sq_i / trials));
    worst_rms = std::max(worst_rms, rms);
    o.detail << (o.detail.tellp() > 0 ? "; " : "") << fmt(row.temperature_k, 3) << " K RMS(Q_l, Q_int) "
             << fmt(100 * std::sqrt(sq_l / trials), 3) << "%, " << fmt(100 * std::sqrt(sq_i / trials), 3) << "%";
  }
  const double dt = seconds_since(t0);
  o.require(worst_f <= 10e3, "noiseless max |df_r| " + fmt(worst_f, 3) + " Hz <= 10 kHz");
  o.require(worst_q <= 0.01, "noiseless max |dQ/Q| " + fmt(worst_q, 3) + " <= 1%");
  o.require(worst_rms <= 0.05, "20 dB over " + std::to_string(trials) + " trials: worst RMS " + fmt(100 * worst_rms, 3) + "% <= 5%");
  o.require(dt < 60.0, "runtime " + fmt(dt, 3) + " s < 60 s");
}

// 5. Temperature series of spectra at 2 mW.
void spectra(Outcome& o) {
  auto cfg = config::RunConfig::load(RYDCPW_CONFIG_DIR "/fig4_spectrum.yaml");
  const auto& m = shared_models();
  cfg.experiment.kappa = kappa_for(cfg, m);
  std::vector<double> freqs;
  for (double off : cfg.spectrum.offsets_hz) freqs.push_back(m.half_frequency_hz + off);
  std::vector<double> peaks;
  dynamics::LineShape first;
  for (double t : cfg.spectrum.temperatures_k) {
    auto x = cfg.experiment;
    x.t_cpw_k = t;
    const auto line = dynamics::analyze_line(dynamics::simulate_spectrum(x, freqs, m, {hw_threads()}));
    if (peaks.empty()) first = line;
    peaks.push_back(line.peak_signal);
  }
  bool decreasing = true;
  std::string list;
  for (std::size_t i = 0; i < peaks.size(); ++i) {
    if (i > 0 && !(peaks[i] < peaks[i - 1])) decreasing = false;
    list += (i ? ", " : "") + fmt(peaks[i], 4);
  }
  o.require(decreasing, "peaks " + list + " strictly decreasing");
  o.require(first.fwhm >= 0.7e6 && first.fwhm <= 2.8e6, "3.65 K FWHM " + fmt(first.fwhm / 1e6, 3) + " MHz within x2 of 1.4 MHz");
  const double shift = atoms::two_photon_stark_shift(cfg.experiment.stray_field_v_per_cm, m.alpha_lower_ghz, m.alpha_upper_ghz);
  o.require(std::abs(first.centroid - (m.half_frequency_hz + shift)) <= 0.2e6,
            "centroid offset " + fmt((first.centroid - m.half_frequency_hz) / 1e3, 4) + " kHz vs configured shift " +
                fmt(shift / 1e3, 4) + " kHz");
  const double stray = dynamics::infer_stray_field(m.half_frequency_hz - 149e3, m);
  o.require(stray >= 0.049 && stray <= 0.050, "-149 kHz -> " + fmt(stray * 1e3, 4) + " mV/cm");
}

// 6. Rabi oscillations at 12.6 mW.
void rabi(Outcome& o) {
  auto cfg = config::RunConfig::load(RYDCPW_CONFIG_DIR "/fig5_rabi.yaml");
  const auto& m = shared_models();
  cfg.experiment.kappa = kappa_for(cfg, m);
  auto ref = cfg.experiment;
  const double omega = dynamics::local_rabi_frequency(ref, m, cfg.calibration.point.x_m, cfg.calibration.point.y_m,
                                                      m.resonator.length_m / 3.0);
  o.require(std::abs(omega - 3e6) < 1.0, "kappa " + fmt(cfg.experiment.kappa) + " Hz/(V/m)^2 gives " + fmt(omega / 1e6, 6) + " MHz at the reference");
  std::vector<dynamics::SignalCurve> curves;
  for (double d : {0.0, 2e6}) {
    auto x = cfg.experiment;
    x.drive_frequency_hz = m.half_frequency_hz + d;
    curves.push_back(dynamics::simulate_rabi(x, cfg.rabi.durations_s, m, {hw_threads()}));
  }
  const double peak = *std::max_element(curves[0].signal.begin(), curves[0].signal.end());
  o.require(peak >= 0.5, "resonant peak transfer " + fmt(peak, 4) + " >= 0.5");
  const auto& f0 = curves[0].fit;
  const auto& f2 = curves[1].fit;
  o.require(f2.frequency_hz > f0.frequency_hz, "fitted frequency detuned " + fmt(f2.frequency_hz / 1e6, 4) +
                                                   " MHz > resonant " + fmt(f0.frequency_hz / 1e6, 4) + " MHz");
  o.require(std::isfinite(f0.decay_time()) && std::isfinite(f2.decay_time()),
            "decay time resonant " + fmt(f0.decay_time() * 1e9, 4) + " ns, detuned " + fmt(f2.decay_time() * 1e9, 4) + " ns");
}

// 7. Field solver against the conformal-mapping formula.
void field_solver(Outcome& o) {
  const fieldmap::CpwGeometry nominal;
  for (const auto& g : {nominal, nominal.scaled(2.0)}) {
    const auto f = fieldmap::solve_cross_section(g);
    const double rel = f.effective_permittivity() / fieldmap::conformal_effective_permittivity(g) - 1;
    const std::string tag = "w_c " + fmt(g.center_width_m * 1e6, 3) + " um: ";
    o.require(std::abs(rel) <= 0.02, tag + "eps_eff " + fmt(f.effective_permittivity(), 5) + " (" + fmt(100 * rel, 3) + "%)");
    o.require(f.laplace_residual() < 1e-6, tag + "residual " + fmt(f.laplace_residual(), 3));
    o.require(f.mirror_asymmetry() < 1e-6, tag + "asymmetry " + fmt(f.mirror_asymmetry(), 3));
  }
}

// 8. Intracavity photon number in the Rabi configuration.
void photons(Outcome& o) {
  const auto cfg = config::RunConfig::load(RYDCPW_CONFIG_DIR "/fig5_rabi.yaml");
  const auto& m = shared_models();
  const auto& x = cfg.experiment;
  const double nu3 = resonator::mode_frequency(x.t_cpw_k, m.resonator);
  const double n = resonator::photon_number(x.p_source_w, x.attenuation_db, x.t_cpw_k, m.resonator, nu3);
  o.require(n >= 1e8 && n <= 1e11, "on resonance " + fmt(n, 3) + " in [1e8, 1e11]");
}

// 9. Property suites.
void properties(Outcome& o) {
  // Population conservation under random piecewise drive.
  const CounterRng rng(2024, 9);
  double worst_norm = 0.0;
  dynamics::TwoLevelState s;
  for (std::uint64_t k = 0; k < 100000; ++k) {
    s = dynamics::propagate(s, 2e7 * rng.uniform(3 * k), 4e7 * (rng.uniform(3 * k + 1) - 0.5), 5e-9 * rng.uniform(3 * k + 2));
    worst_norm = std::max(worst_norm, std::abs(s.p_lower() + s.p_upper() - 1.0));
  }
  o.require(worst_norm < 1e-9, "population drift " + fmt(worst_norm, 3));

  // Generalized Rabi formula over ten periods.
  double worst_rabi = 0.0;
  for (auto [om, de] : {std::pair{3e6, 0.0}, std::pair{3e6, 4e6}, std::pair{0.7e6, -1.9e6}}) {
    const double w = std::hypot(om, de);
    for (int i = 0; i <= 1000; ++i) {
      const double t = 10.0 / w * i / 1000.0;
      const double a[] = {om}, b[] = {de};
      const double p = dynamics::evolve_two_level(a, b, t).p_upper();
      const double exact = om * om / (w * w) * std::pow(std::sin(constants::pi * w * t), 2);
      worst_rabi = std::max(worst_rabi, std::abs(p - exact));
    }
  }
  o.require(worst_rabi < 1e-8, "analytic Rabi deviation " + fmt(worst_rabi, 3));

  // Seeds and thread counts.
  const auto& m = shared_models();
  auto cfg = config::RunConfig::load(RYDCPW_CONFIG_DIR "/fig4_spectrum.yaml");
  cfg.experiment.kappa = kappa_for(cfg, m);
  cfg.experiment.ensemble.n_samples = 300;
  std::vector<double> freqs;
  for (int i = -10; i <= 10; ++i) freqs.push_back(m.half_frequency_hz + 1.5e5 * i);
  const auto a = dynamics::simulate_spectrum(cfg.experiment, freqs, m, {1});
  const auto b = dynamics::simulate_spectrum(cfg.experiment, freqs, m, {hw_threads()});
  const auto c = dynamics::simulate_spectrum(cfg.experiment, freqs, m, {3});
  auto other = cfg.experiment;
  other.ensemble.seed += 1;
  const auto d = dynamics::simulate_spectrum(other, freqs, m, {1});
  o.require(a.signal == b.signal && a.signal == c.signal && a.signal != d.signal,
            "identical curves for 1/3/" + std::to_string(hw_threads()) + " threads, different for a new seed");

  // Compensation scan.
  auto comp = config::RunConfig::load(RYDCPW_CONFIG_DIR "/fig3_compscan.yaml");
  comp.experiment.kappa = kappa_for(comp, m);
  comp.experiment.ensemble.n_samples = 300;
  comp.experiment.comp_coefficient_v_per_cm_per_v = comp.experiment.stray_field_v_per_cm / comp.compscan.optimum_v;
  const auto scan = dynamics::simulate_compensation_scan(comp.experiment, comp.compscan.voltages_v, m, {hw_threads()});
  const auto best = std::max_element(scan.signal.begin(), scan.signal.end()) - scan.signal.begin();
  auto at_peak = comp.experiment;
  at_peak.comp_voltage_v = scan.axis[best];
  double min_net = 1e300;
  for (double v : scan.axis) {
    auto x = comp.experiment;
    x.comp_voltage_v = v;
    min_net = std::min(min_net, x.net_static_field());
  }
  o.require(at_peak.net_static_field() == min_net && std::abs(scan.axis[best] - 1.45) < 1e-9,
            "scan peak at " + fmt(scan.axis[best], 6) + " V, net field there " + fmt(at_peak.net_static_field(), 3) + " V/cm");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"two-photon half frequency", half_frequency},
      {"55s/56s polarizabilities", polarizabilities},
      {"resonator linewidth and ring-down", linewidth},
      {"circle-fit round trip", circle_fit},
      {"spectrum temperature series", spectra},
      {"Rabi oscillations", rabi},
      {"field solver", field_solver},
      {"photon number", photons},
      {"property suites", properties},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    const auto t0 = Clock::now();
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].first << ": " << o.detail.str()
              << " (" << fmt(seconds_since(t0), 3) << " s)" << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
