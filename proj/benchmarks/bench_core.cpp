#include <benchmark/benchmark.h>

#include "pssgm/data.hpp"
#include "pssgm/dynamics.hpp"
#include "pssgm/learning.hpp"

using namespace pssgm;

namespace {

Topology grid_topology(const benchmark::State& state) {
    return Topology::grid(12, 12, static_cast<double>(state.range(0)));
}

SampleMatrix random_batch(std::size_t rows, std::size_t dim, std::uint64_t seed) {
    RandomStream rng{NoiseSource(seed)};
    SampleMatrix m(rows, dim);
    for (double& v : m.data()) v = 0.8 * (2.0 * rng.uniform() - 1.0);
    return m;
}

void BM_ForceHat(benchmark::State& state) {
    const Topology topo = grid_topology(state);
    const EnergyParams p = EnergyParams::initial(topo, {});
    const SampleMatrix x = random_batch(1, topo.size(), 1);
    for (auto _ : state) benchmark::DoNotOptimize(force_hat(p, topo, x.row(0)));
    state.counters["edges"] = static_cast<double>(topo.edges().size());
}
BENCHMARK(BM_ForceHat)->Arg(1)->Arg(3)->Arg(6);

void BM_ForceMatchingGrad(benchmark::State& state) {
    const Topology topo = grid_topology(state);
    const EnergyParams p = EnergyParams::initial(topo, {});
    const SampleMatrix batch = random_batch(256, topo.size(), 2);
    for (auto _ : state) benchmark::DoNotOptimize(force_matching_grad(p, topo, batch, 0.005));
    state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_ForceMatchingGrad)->Arg(1)->Arg(3)->Arg(6)->Unit(benchmark::kMillisecond);

void BM_Cd1Grad(benchmark::State& state) {
    const Topology topo = Topology::complete(2);
    const EnergyParams p = EnergyParams::initial(topo, {});
    const SampleMatrix batch = random_batch(256, 2, 3);
    const CD1Config cfg{1e-3, static_cast<std::size_t>(state.range(0)), true};
    for (auto _ : state) benchmark::DoNotOptimize(cd1_grad(p, topo, batch, 0.005, cfg, NoiseSource(4)));
}
BENCHMARK(BM_Cd1Grad)->Arg(8)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_ForwardKernel(benchmark::State& state) {
    RandomStream rng{NoiseSource(5)};
    const std::vector<double> x0(144, 0.5);
    std::vector<double> out(144);
    for (auto _ : state) {
        forward_kernel_sample(x0, 0.3, 0.005, rng, out);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_ForwardKernel);

void BM_ReverseChain(benchmark::State& state) {
    const Topology topo = grid_topology(state);
    const TrainConfig cfg;
    const std::vector<EnergyParams> snaps(cfg.n_times, EnergyParams::initial(topo, {}));
    const Schedule s(cfg.time_grid(), snaps, topo, cfg.kbt);
    const IntegratorConfig ic = default_integrator(s);
    for (auto _ : state) benchmark::DoNotOptimize(reverse_sample(s, ic, NoiseSource(6), 1));
}
BENCHMARK(BM_ReverseChain)->Arg(1)->Arg(6)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
