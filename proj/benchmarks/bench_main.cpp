#include <benchmark/benchmark.h>

#include <vector>

#include "rydcpw/circlefit.hpp"
#include "rydcpw/config.hpp"
#include "rydcpw/dynamics.hpp"
#include "rydcpw/fieldmap.hpp"
#include "rydcpw/resonator.hpp"
#include "rydcpw/stark.hpp"

using namespace rydcpw;

namespace {

const dynamics::SharedModels& models() {
  static const dynamics::SharedModels m = [] {
    dynamics::SharedModels s;
    s.resonator = config::load_resonator(config::RunConfig::defaults());
    s.cross = fieldmap::solve_cross_section();
    return s;
  }();
  return m;
}

void BM_StarkMap(benchmark::State& state) {
  const auto defects = config::load_defects(config::RunConfig::defaults());
  atoms::StarkBasisSpec spec;
  spec.n_min = static_cast<int>(state.range(0));
  spec.n_max = spec.n_min + 3;
  const auto fields = atoms::default_polarizability_fields();
  for (auto _ : state) benchmark::DoNotOptimize(atoms::build_stark_map(spec, fields, defects));
}
BENCHMARK(BM_StarkMap)->Arg(54)->Unit(benchmark::kMillisecond);

void BM_FieldSolve(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(fieldmap::solve_cross_section());
}
BENCHMARK(BM_FieldSolve)->Unit(benchmark::kMillisecond);

void BM_CircleFit(benchmark::State& state) {
  const auto& p = models().resonator;
  const auto grid = resonator::linewidth_grid(p, 3.65, 6.0, static_cast<std::size_t>(state.range(0)));
  const auto trace = resonator::synth_s21(p, 3.65, grid, {1.0, 0.3, 1e-9}, resonator::NoiseSpec{20.0, 1});
  for (auto _ : state) benchmark::DoNotOptimize(circlefit::extract_q(trace));
}
BENCHMARK(BM_CircleFit)->Arg(1001)->Arg(10001)->Unit(benchmark::kMillisecond);

void BM_RabiEnsemble(benchmark::State& state) {
  dynamics::ExperimentConfig x;
  x.kappa = 74637.4369;
  x.p_source_w = 12.6e-3;
  x.drive_frequency_hz = models().half_frequency_hz;
  x.ensemble.n_samples = static_cast<std::size_t>(state.range(0));
  std::vector<double> durations;
  for (int i = 0; i <= 50; ++i) durations.push_back(i * 10e-9);
  for (auto _ : state) benchmark::DoNotOptimize(dynamics::simulate_rabi(x, durations, models()));
}
BENCHMARK(BM_RabiEnsemble)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_MagnusStep(benchmark::State& state) {
  dynamics::TwoLevelState s;
  for (auto _ : state) {
    s = dynamics::magnus_step(s, 3e6, 1e5, 3.1e6, 1.2e5, 1e-9);
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(BM_MagnusStep);

}  // namespace

BENCHMARK_MAIN();
