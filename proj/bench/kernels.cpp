// Serial vs OpenMP timings of the particle kernels and of the Monte Carlo
// battery. The "serial" cases call the same functions with parallel=false.

#include "qfilt/bench.hpp"
#include "qfilt/config.hpp"
#include "qfilt/particle.hpp"

#include <benchmark/benchmark.h>

using namespace qfilt;

namespace {

const char* kModel = R"cfg(
[model]
A = 0.9
B = 1.2
C = 2.2
D = 0.75
Q = 1.0
R = 0.5
mu1 = 1.0
P1 = 0.01

[quantizer]
type = "uniform"
step = 8

[bench]
horizon = 50
runs = 8
seed = 42
variants = "kf, gsf, pf-rwm-sys(500)"
)cfg";

struct Fixture {
  ExperimentConfig cfg = parse_config(kModel);
  Trajectory traj = simulate_run(cfg, 0);
  QuantizedLikelihood lik{cfg.quantizer, cfg.model.R};
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

PfCfg pf_cfg(int M, bool parallel) {
  PfCfg c;
  c.M = M;
  c.scheme = ResampleScheme::SYS;
  c.mcmc.kind = MoveKind::RWM;
  c.parallel = parallel;
  c.parallel_threshold = 1;
  return c;
}

void BM_ParticleFilter(benchmark::State& state, bool parallel) {
  const auto& f = fixture();
  const PfCfg c = pf_cfg(static_cast<int>(state.range(0)), parallel);
  for (auto _ : state) {
    auto r = pf_filter(f.cfg.model, f.lik, c, f.traj.u, f.traj.y, {f.cfg.seed, 0});
    benchmark::DoNotOptimize(r.means.back().data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * static_cast<long>(f.traj.size()));
}

void BM_RejectionSmoother(benchmark::State& state, bool parallel) {
  const auto& f = fixture();
  const PfCfg c = pf_cfg(static_cast<int>(state.range(0)), true);
  const PfResult pf = pf_filter(f.cfg.model, f.lik, c, f.traj.u, f.traj.y, {f.cfg.seed, 0});
  for (auto _ : state) {
    auto s = ps_rejection(pf.sets, f.cfg.model, f.traj.u, {f.cfg.seed, 0}, parallel);
    benchmark::DoNotOptimize(s.front().x.data());
  }
}

void BM_MarginalSmoother(benchmark::State& state, bool parallel) {
  const auto& f = fixture();
  const PfCfg c = pf_cfg(static_cast<int>(state.range(0)), true);
  const PfResult pf = pf_filter(f.cfg.model, f.lik, c, f.traj.u, f.traj.y, {f.cfg.seed, 0});
  for (auto _ : state) {
    auto w = ps_marginal(pf.sets, f.cfg.model, f.traj.u, parallel);
    benchmark::DoNotOptimize(w.front().data());
  }
}

void BM_Battery(benchmark::State& state) {
  ExperimentConfig cfg = fixture().cfg;
  cfg.threads = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto runs = run_monte_carlo(cfg);
    benchmark::DoNotOptimize(runs.data());
  }
}

}  // namespace

BENCHMARK_CAPTURE(BM_ParticleFilter, serial, false)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_ParticleFilter, openmp, true)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_RejectionSmoother, serial, false)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_RejectionSmoother, openmp, true)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_MarginalSmoother, serial, false)->Arg(200)->Arg(500)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_MarginalSmoother, openmp, true)->Arg(200)->Arg(500)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Battery)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
