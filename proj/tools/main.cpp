// rydcpw: figure-by-figure reproduction commands.

#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"

int main(int argc, char** argv) {
  using namespace rydcpw::cli;
  CLI::App app{"Rydberg helium above a superconducting CPW resonator: simulations and resonator fits", "rydcpw"};
  app.require_subcommand(1);
  app.set_version_flag("--version", RYDCPW_VERSION);

  GlobalOptions g;
  std::string config_path, out_dir = ".";
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Ensemble / noise seed (default: from the config)");
  app.add_option("--config", config_path, "YAML scenario file (default: built-in defaults)");
  app.add_option("--out", out_dir, "Output directory")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();

  auto add = [&](const char* name, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    sub->fallthrough();
    return sub;
  };
  auto* starkmap = add("starkmap", "Stark map and two-photon shift table");
  auto* fitres = add("fitres", "Circle fits of S21 trace CSVs (files or directories)");
  std::vector<std::string> inputs;
  fitres->add_option("inputs", inputs, "Trace files or directories (default: fitres.inputs)");
  auto* spectrum = add("spectrum", "Two-photon spectra at each configured temperature");
  auto* rabi = add("rabi", "Rabi oscillations versus pulse duration");
  auto* compscan = add("compscan", "Transfer versus compensation voltage");
  auto* fieldmap = add("fieldmap", "CPW cross-section field solve and effective permittivity");
  auto* calibrate = add("calibrate", "Two-photon coupling kappa from the reference Rabi frequency");
  auto* synth = add("synth", "Synthetic notch traces for the tabulated temperatures");
  double snr = -1.0;
  synth->add_option("--snr", snr, "SNR in dB (0: noiseless; default: synth.snr_db)");
  for (auto* sub : {spectrum, rabi, compscan}) {
    sub->add_flag("--auto-calibrate", g.auto_calibrate, "Calibrate kappa first when the config gives none");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  g.config_path = config_path;
  g.out_dir = out_dir;
  if (seed_opt->count() > 0) g.seed = seed;

  try {
    if (starkmap->parsed()) return cmd_starkmap(g);
    if (fitres->parsed()) return cmd_fitres(g, {inputs.begin(), inputs.end()});
    if (spectrum->parsed()) return cmd_spectrum(g);
    if (rabi->parsed()) return cmd_rabi(g);
    if (compscan->parsed()) return cmd_compscan(g);
    if (fieldmap->parsed()) return cmd_fieldmap(g);
    if (calibrate->parsed()) return cmd_calibrate(g);
    if (synth->parsed()) return cmd_synth(g, snr);
  } catch (const std::exception& e) {
    std::cerr << "rydcpw: error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return 2;
}
