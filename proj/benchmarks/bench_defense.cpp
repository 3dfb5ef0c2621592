#include <benchmark/benchmark.h>

#include "bench_common.hpp"
#include "rulkit/defense.hpp"

using namespace rulkit;

namespace {

void quad_approx(benchmark::State& state) {
    const RegressionModel m = bench::make_model(Arch::GRU);
    const int groups = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(quadratic_approx(m.net.params, groups, false));
    state.SetItemsProcessed(state.iterations() * m.net.params.scalar_count());
}

void quad_approx_index_basis(benchmark::State& state) {
    const RegressionModel m = bench::make_model(Arch::GRU);
    const int groups = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(quadratic_approx(m.net.params, groups, true));
    state.SetItemsProcessed(state.iterations() * m.net.params.scalar_count());
}

}  // namespace

BENCHMARK(quad_approx)->Arg(1)->Arg(16)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(quad_approx_index_basis)->Arg(16)->Unit(benchmark::kMillisecond);
