#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "rydcpw/atoms.hpp"
#include "rydcpw/circlefit.hpp"
#include "rydcpw/csv.hpp"
#include "rydcpw/dynamics.hpp"
#include "rydcpw/error.hpp"
#include "rydcpw/fieldmap.hpp"
#include "rydcpw/resonator.hpp"
#include "rydcpw/stark.hpp"

namespace rydcpw::cli {
namespace {

namespace fs = std::filesystem;
using csv::format_double;

// One CLI invocation: resolved config, data files, seed, and the outputs it
// has written so far.
class Run {
 public:
  Run(std::string command, const GlobalOptions& g, std::string extra = {})
      : command_(std::move(command)), out_dir_(g.out_dir) {
    cfg = g.config_path.empty() ? config::RunConfig::defaults() : config::RunConfig::load(g.config_path);
    defects = config::load_defects(cfg);
    params = config::load_resonator(cfg);
    seed = g.seed.value_or(cfg.experiment.ensemble.seed);
    cfg.experiment.ensemble.seed = seed;
    threads = std::max(1, g.threads);

    manifest_.command = command_;
    manifest_.config_path = g.config_path.empty() ? "(defaults)" : g.config_path.generic_string();
    manifest_.seed = seed;
    manifest_.versions = {{"defects", defects.version()}, {"resonator", params.version}, {"rydcpw", RYDCPW_VERSION}};
    // CLI-only switches that change results are part of the hashed command.
    manifest_.hash = config::manifest_hash(command_ + extra, cfg.text, seed, manifest_.versions);

    check_temperature(cfg.experiment.t_cpw_k, "experiment.t_cpw_k");
    check_temperature(cfg.calibration.t_cpw_k, "calibration.t_cpw_k");
    for (double t : cfg.spectrum.temperatures_k) check_temperature(t, "spectrum.temperatures_k");
    for (double t : cfg.synth.temperatures_k) check_temperature(t, "synth.temperatures_k");

    std::error_code ec;
    fs::create_directories(out_dir_, ec);
    if (ec) throw IoError("cannot create output directory '" + out_dir_.string() + "': " + ec.message());
  }

  void check_temperature(double t, const std::string& key) const {
    if (t < params.min_temperature() || t > params.max_temperature()) {
      throw ConfigError(key + " = " + format_double(t) + " K lies outside the resonator table [" +
                        format_double(params.min_temperature()) + ", " + format_double(params.max_temperature()) +
                        "] K (" + params.version + ")");
    }
  }

  void write(const std::string& name, const std::string& body) {
    const auto path = out_dir_ / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << "# manifest-hash: " << manifest_.hash << '\n' << "# seed: " << manifest_.seed << '\n' << body;
    out.close();
    if (!out) throw IoError("write failed for '" + path.string() + "'");
    manifest_.outputs.push_back(name);
    std::cout << "wrote " << path.string() << '\n';
  }

  void finish() {
    const auto path = out_dir_ / "manifest.json";
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << manifest_.to_json();
    out.close();
    if (!out) throw IoError("write failed for '" + path.string() + "'");
    std::cout << "wrote " << path.string() << '\n';
  }

  dynamics::SharedModels models() const {
    dynamics::SharedModels m;
    m.resonator = params;
    m.cross = fieldmap::solve_cross_section(cfg.geometry, cfg.grid);
    m.half_frequency_hz = cfg.models.half_frequency_hz;
    m.alpha_lower_ghz = cfg.models.alpha_lower_ghz;
    m.alpha_upper_ghz = cfg.models.alpha_upper_ghz;
    return m;
  }

  dynamics::SimulationOptions sim() const { return {threads, 1.0 / 50.0}; }

  config::RunConfig cfg;
  atoms::DefectTable defects;
  resonator::ResonatorParams params;
  std::uint64_t seed = 0;
  int threads = 1;

 private:
  std::string command_;
  fs::path out_dir_;
  config::RunManifest manifest_;
};

double calibrated_kappa(const config::RunConfig& cfg, const dynamics::SharedModels& m) {
  auto ref = cfg.experiment;
  ref.p_source_w = cfg.calibration.p_source_w;
  ref.t_cpw_k = cfg.calibration.t_cpw_k;
  return dynamics::calibrate_kappa(cfg.calibration.target_rabi_hz, ref, m, cfg.calibration.point);
}

void ensure_kappa(Run& run, const dynamics::SharedModels& m, bool auto_flag) {
  if (run.cfg.kappa_given) return;
  if (!auto_flag && !run.cfg.calibration.auto_calibrate) {
    throw ConfigError(
        "kappa is not calibrated: set experiment.kappa_hz_per_v2_m2, set calibration.auto: true, or pass "
        "--auto-calibrate");
  }
  run.cfg.experiment.kappa = calibrated_kappa(run.cfg, m);
  std::cout << "kappa = " << format_double(run.cfg.experiment.kappa) << " Hz/(V/m)^2 (calibrated to "
            << format_double(run.cfg.calibration.target_rabi_hz) << " Hz)\n";
}

std::string quoted(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string extra_for(const GlobalOptions& g) { return g.auto_calibrate ? " --auto-calibrate" : ""; }

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) != nullptr) return 2;
  if (dynamic_cast<const DomainError*>(&e) != nullptr) return 2;
  if (dynamic_cast<const IoError*>(&e) != nullptr) return 4;
  return 3;
}

int cmd_starkmap(const GlobalOptions& g) {
  Run run("starkmap", g);
  const auto& s = run.cfg.stark;
  atoms::StarkOptions opts;
  opts.threads = run.threads;
  const auto map = atoms::build_stark_map(s.basis, s.fields_v_per_cm, run.defects, opts);
  std::ostringstream body;
  map.write_csv(body);
  run.write("starkmap.csv", body.str());

  // Curvature fits on a dedicated weak-field grid.
  std::vector<double> weak;
  const int steps = 25;
  for (int i = 0; i <= steps; ++i) weak.push_back(s.polarizability_max_field_v_per_cm * i / steps);
  const auto weak_map = atoms::build_stark_map(s.basis, weak, run.defects, opts);
  const auto lower = atoms::make_level(s.lower_n, 0, s.basis.m, run.defects);
  const auto upper = atoms::make_level(s.upper_n, 0, s.basis.m, run.defects);
  const auto a_lower = atoms::polarizability(lower, weak_map, s.polarizability_max_field_v_per_cm);
  const auto a_upper = atoms::polarizability(upper, weak_map, s.polarizability_max_field_v_per_cm);

  std::ostringstream pol;
  pol << "level,alpha_ghz_per_v2_cm2,configured_alpha_ghz_per_v2_cm2,relative_residual,points\n";
  for (const auto* p : {&a_lower, &a_upper}) {
    const double configured = p == &a_lower ? run.cfg.models.alpha_lower_ghz : run.cfg.models.alpha_upper_ghz;
    pol << atoms::level_label(p->level.n, p->level.l) << ',' << format_double(p->alpha_ghz) << ','
        << format_double(configured) << ',' << format_double(p->residual) << ',' << p->points << '\n';
  }
  run.write("polarizability.csv", pol.str());

  std::ostringstream shift;
  shift << "# half_frequency_hz: " << format_double(atoms::transition_frequency(lower, upper) / 2.0) << '\n';
  shift << "field_v_per_cm,shift_hz,shift_fitted_alpha_hz\n";
  for (double f : s.shift_fields_v_per_cm) {
    shift << format_double(f) << ','
          << format_double(atoms::two_photon_stark_shift(f, run.cfg.models.alpha_lower_ghz, run.cfg.models.alpha_upper_ghz))
          << ',' << format_double(atoms::two_photon_stark_shift(f, a_lower, a_upper)) << '\n';
  }
  run.write("stark_shift.csv", shift.str());

  std::cout << "basis " << map.basis.size() << " states; alpha(" << atoms::level_label(lower.n, 0)
            << ") = " << format_double(a_lower.alpha_ghz) << ", alpha(" << atoms::level_label(upper.n, 0)
            << ") = " << format_double(a_upper.alpha_ghz) << " GHz/(V/cm)^2\n";
  run.finish();
  return 0;
}

int cmd_fitres(const GlobalOptions& g, const std::vector<fs::path>& cli_inputs) {
  std::string extra;
  for (const auto& p : cli_inputs) extra += " " + p.generic_string();
  Run run("fitres", g, extra);
  const auto& inputs = cli_inputs.empty() ? run.cfg.fitres.inputs : cli_inputs;
  if (inputs.empty()) throw ConfigError("fitres: no input traces (pass files or directories, or set fitres.inputs)");

  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& entry : fs::directory_iterator(in)) {
        if (entry.is_regular_file() && entry.path().extension() == ".csv") found.push_back(entry.path());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else if (fs::exists(in)) {
      files.push_back(in);
    } else {
      throw IoError("fitres: no such file or directory '" + in.string() + "'");
    }
  }
  if (files.empty()) throw ConfigError("fitres: empty input, no *.csv trace files found");

  std::ostringstream rows, errors;
  rows << "temperature_k,f_r_hz,q_int,q_int_err,q_loaded,q_loaded_err,f_r_err_hz,q_c_mag,phi_rad,delay_s,"
          "residual,file\n";
  errors << "file,error\n";
  std::size_t ok = 0, failed = 0;
  for (const auto& file : files) {
    try {
      const auto trace = ComplexTrace::read_csv_file(file);
      const auto r = circlefit::extract_q(trace, run.cfg.fitres.options);
      rows << format_double(trace.metadata.temperature_k) << ',' << format_double(r.f_r_hz) << ','
           << format_double(r.q_int) << ',' << format_double(r.uncertainty.q_int) << ','
           << format_double(r.q_loaded) << ',' << format_double(r.uncertainty.q_loaded) << ','
           << format_double(r.uncertainty.f_r) << ',' << format_double(r.q_c_mag) << ',' << format_double(r.phi)
           << ',' << format_double(r.delay_s) << ',' << format_double(r.residual) << ','
           << quoted(file.generic_string()) << '\n';
      ++ok;
    } catch (const Error& e) {
      std::cerr << "fitres: " << file.string() << ": " << e.what() << '\n';
      errors << quoted(file.generic_string()) << ',' << quoted(e.what()) << '\n';
      ++failed;
    }
  }
  if (ok == 0) throw NumericalError("fitres: none of the " + std::to_string(files.size()) + " traces could be fitted");
  run.write("fitres.csv", rows.str());
  if (failed > 0) run.write("fitres_errors.csv", errors.str());
  std::cout << ok << " fitted, " << failed << " failed\n";
  run.finish();
  return 0;
}

int cmd_spectrum(const GlobalOptions& g) {
  Run run("spectrum", g, extra_for(g));
  const auto models = run.models();
  ensure_kappa(run, models, g.auto_calibrate);
  const auto& sp = run.cfg.spectrum;
  std::vector<double> freqs;
  for (double d : sp.offsets_hz) freqs.push_back(models.half_frequency_hz + d);

  std::ostringstream summary;
  summary << "temperature_k,peak_signal,peak_offset_hz,centroid_offset_hz,fwhm_hz,inferred_stray_field_v_per_cm\n";
  for (double t : sp.temperatures_k) {
    auto x = run.cfg.experiment;
    x.t_cpw_k = t;
    const auto curve = dynamics::simulate_spectrum(x, freqs, models, run.sim());
    std::ostringstream body;
    curve.write_csv(body);
    run.write("spectrum_" + format_double(t) + "K.csv", body.str());

    const auto line = dynamics::analyze_line(curve);
    double stray = std::nan("");
    try {
      stray = dynamics::infer_stray_field(line.centroid, models);
    } catch (const DomainError&) {
    }
    summary << format_double(t) << ',' << format_double(line.peak_signal) << ','
            << format_double(line.peak_axis - models.half_frequency_hz) << ','
            << format_double(line.centroid - models.half_frequency_hz) << ',' << format_double(line.fwhm) << ','
            << format_double(stray) << '\n';
    std::cout << "T = " << format_double(t) << " K: peak " << format_double(line.peak_signal) << ", FWHM "
              << format_double(line.fwhm) << " Hz\n";
  }
  run.write("spectrum_summary.csv", summary.str());
  run.finish();
  return 0;
}

int cmd_rabi(const GlobalOptions& g) {
  Run run("rabi", g, extra_for(g));
  const auto models = run.models();
  ensure_kappa(run, models, g.auto_calibrate);
  const auto& rb = run.cfg.rabi;

  std::ostringstream summary;
  summary << "detuning_hz,peak_signal,fit_frequency_hz,fit_decay_time_s,fit_amplitude,fit_offset,fit_rms\n";
  for (double d : rb.detunings_hz) {
    auto x = run.cfg.experiment;
    x.drive_frequency_hz = models.half_frequency_hz + d;
    const auto curve = dynamics::simulate_rabi(x, rb.durations_s, models, run.sim());
    std::ostringstream body;
    curve.write_csv(body);
    run.write("rabi_" + format_double(d) + "Hz.csv", body.str());

    const double peak = *std::max_element(curve.signal.begin(), curve.signal.end());
    const double nan = std::nan("");
    const auto& f = curve.fit;
    summary << format_double(d) << ',' << format_double(peak) << ','
            << format_double(curve.has_fit ? f.frequency_hz : nan) << ','
            << format_double(curve.has_fit ? f.decay_time() : nan) << ','
            << format_double(curve.has_fit ? f.amplitude : nan) << ','
            << format_double(curve.has_fit ? f.offset : nan) << ','
            << format_double(curve.has_fit ? f.rms_residual : nan) << '\n';
    std::cout << "detuning " << format_double(d) << " Hz: peak " << format_double(peak);
    if (curve.has_fit) {
      std::cout << ", f " << format_double(f.frequency_hz) << " Hz, tau " << format_double(f.decay_time()) << " s";
    } else if (!curve.fit_error.empty()) {
      std::cout << ", no fit (" << curve.fit_error << ")";
    }
    std::cout << '\n';
  }
  run.write("rabi_summary.csv", summary.str());
  run.finish();
  return 0;
}

int cmd_compscan(const GlobalOptions& g) {
  Run run("compscan", g, extra_for(g));
  const auto models = run.models();
  ensure_kappa(run, models, g.auto_calibrate);
  auto x = run.cfg.experiment;
  if (x.comp_coefficient_v_per_cm_per_v == 0.0) {
    if (x.stray_field_v_per_cm == 0.0) {
      throw ConfigError("compscan: set experiment.stray_field_v_per_cm or experiment.comp_coefficient_v_per_cm_per_v");
    }
    x.comp_coefficient_v_per_cm_per_v = x.stray_field_v_per_cm / run.cfg.compscan.optimum_v;
  }
  const auto curve = dynamics::simulate_compensation_scan(x, run.cfg.compscan.voltages_v, models, run.sim());
  std::ostringstream body;
  curve.write_csv(body);
  run.write("compscan.csv", body.str());

  const auto line = dynamics::analyze_line(curve);
  std::ostringstream summary;
  summary << "peak_voltage_v,peak_signal,centroid_v,fwhm_v,net_zero_voltage_v,comp_coefficient_v_per_cm_per_v\n";
  summary << format_double(line.peak_axis) << ',' << format_double(line.peak_signal) << ','
          << format_double(line.centroid) << ',' << format_double(line.fwhm) << ','
          << format_double(x.stray_field_v_per_cm / x.comp_coefficient_v_per_cm_per_v) << ','
          << format_double(x.comp_coefficient_v_per_cm_per_v) << '\n';
  run.write("compscan_summary.csv", summary.str());
  std::cout << "peak at " << format_double(line.peak_axis) << " V\n";
  run.finish();
  return 0;
}

int cmd_fieldmap(const GlobalOptions& g) {
  Run run("fieldmap", g);
  const auto& geo = run.cfg.geometry;
  const auto cross = fieldmap::solve_cross_section(geo, run.cfg.grid);
  std::ostringstream body;
  cross.write_csv(body, run.cfg.dump.max_abs_x_m, run.cfg.dump.y_min_m, run.cfg.dump.y_max_m);
  run.write("fieldmap.csv", body.str());

  const double eps = cross.effective_permittivity();
  const double eps_cm = fieldmap::conformal_effective_permittivity(geo);
  const double c_cm = fieldmap::conformal_capacitance(geo);
  std::ostringstream report;
  report << "quantity,value\n";
  report << "effective_permittivity," << format_double(eps) << '\n';
  report << "conformal_effective_permittivity," << format_double(eps_cm) << '\n';
  report << "effective_permittivity_rel_diff," << format_double(eps / eps_cm - 1.0) << '\n';
  report << "capacitance_f_per_m," << format_double(cross.capacitance()) << '\n';
  report << "conformal_capacitance_f_per_m," << format_double(c_cm) << '\n';
  report << "capacitance_rel_diff," << format_double(cross.capacitance() / c_cm - 1.0) << '\n';
  report << "laplace_residual," << format_double(cross.laplace_residual()) << '\n';
  report << "mirror_asymmetry," << format_double(cross.mirror_asymmetry()) << '\n';
  report << "e_mag_per_volt_at_0_100um," << format_double(cross.e_mag_at(0.0, 100e-6)) << '\n';
  report << "nodes_x," << cross.nx() << '\n';
  report << "nodes_y," << cross.ny() << '\n';
  run.write("fieldmap_report.csv", report.str());
  std::cout << "eps_eff = " << format_double(eps) << " (conformal " << format_double(eps_cm) << ")\n";
  run.finish();
  return 0;
}

int cmd_calibrate(const GlobalOptions& g) {
  Run run("calibrate", g);
  const auto models = run.models();
  const auto& cal = run.cfg.calibration;
  const double kappa = calibrated_kappa(run.cfg, models);

  auto ref = run.cfg.experiment;
  ref.p_source_w = cal.p_source_w;
  ref.t_cpw_k = cal.t_cpw_k;
  const double z = std::isnan(cal.point.z_m) ? run.params.length_m / 3.0 : cal.point.z_m;
  const double v = dynamics::antinode_voltage(ref, models);
  const double e = fieldmap::field_at(cal.point.x_m, cal.point.y_m, z, models.cross, models.resonator, v);
  const double nu3 = run.params.at(cal.t_cpw_k).nu3_hz;

  std::ostringstream out;
  out << "quantity,value\n";
  out << "kappa_hz_per_v2_m2," << format_double(kappa) << '\n';
  out << "target_rabi_hz," << format_double(cal.target_rabi_hz) << '\n';
  out << "p_source_w," << format_double(cal.p_source_w) << '\n';
  out << "t_cpw_k," << format_double(cal.t_cpw_k) << '\n';
  out << "reference_x_m," << format_double(cal.point.x_m) << '\n';
  out << "reference_y_m," << format_double(cal.point.y_m) << '\n';
  out << "reference_z_m," << format_double(z) << '\n';
  out << "antinode_voltage_scale," << format_double(v) << '\n';
  out << "reference_field_v_per_m," << format_double(e) << '\n';
  out << "photon_number_at_drive,"
      << format_double(resonator::photon_number(cal.p_source_w, ref.attenuation_db, cal.t_cpw_k, run.params,
                                                ref.drive_frequency_hz))
      << '\n';
  out << "photon_number_on_resonance,"
      << format_double(resonator::photon_number(cal.p_source_w, ref.attenuation_db, cal.t_cpw_k, run.params, nu3))
      << '\n';
  run.write("calibration.csv", out.str());
  std::cout << "kappa = " << format_double(kappa) << " Hz/(V/m)^2\n";
  run.finish();
  return 0;
}

int cmd_synth(const GlobalOptions& g, double snr_db) {
  Run run("synth", g, snr_db >= 0.0 ? " --snr " + format_double(snr_db) : "");
  const auto& sy = run.cfg.synth;
  const double snr = snr_db >= 0.0 ? snr_db : sy.snr_db;
  for (std::size_t i = 0; i < sy.temperatures_k.size(); ++i) {
    const double t = sy.temperatures_k[i];
    const auto grid = resonator::linewidth_grid(run.params, t, sy.span_linewidths, sy.points);
    std::optional<resonator::NoiseSpec> noise;
    if (snr > 0.0) noise = resonator::NoiseSpec{snr, run.seed + i};
    const auto trace = resonator::synth_s21(run.params, t, grid, sy.environment, noise);
    std::ostringstream body;
    trace.write_csv(body);
    run.write("trace_" + format_double(t) + "K.csv", body.str());
  }
  run.finish();
  return 0;
}

}  // namespace rydcpw::cli
