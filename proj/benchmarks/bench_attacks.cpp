#include <benchmark/benchmark.h>

#include "bench_common.hpp"
#include "rulkit/attacks.hpp"

using namespace rulkit;

namespace {

// Small GRU keeps the iterated attacks affordable; per-step cost scales
// linearly with gradient cost (see bench_engine for the full-width numbers).
RegressionModel small_gru() {
    ModelSpec spec;
    spec.arch = Arch::GRU;
    spec.hidden = {32};
    spec.seq_len = 30;
    spec.input_dim = 14;
    spec.seed = 7;
    return build(spec);
}

void attack_fgsm(benchmark::State& state) {
    const RegressionModel m = small_gru();
    const auto w = bench::make_windows(1, m.spec.seq_len, m.spec.input_dim)[0];
    for (auto _ : state) benchmark::DoNotOptimize(mts_fgsm(m, w, 0.3));
    state.SetItemsProcessed(state.iterations());
}

void attack_iterated(benchmark::State& state, AttackKind kind) {
    const RegressionModel m = small_gru();
    const auto w = bench::make_windows(1, m.spec.seq_len, m.spec.input_dim)[0];
    AttackConfig cfg;
    cfg.kind = kind;
    cfg.epsilon = 0.3;
    cfg.iterations = static_cast<int>(state.range(0));
    cfg.restarts = 10;
    cfg.seed = 5;
    for (auto _ : state) {
        switch (kind) {
            case AttackKind::BIM: benchmark::DoNotOptimize(mts_bim(m, w, cfg)); break;
            case AttackKind::PGD: benchmark::DoNotOptimize(mts_pgd(m, w, cfg)); break;
            case AttackKind::PGD_R: benchmark::DoNotOptimize(mts_pgd_r(m, w, cfg)); break;
            default: break;
        }
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(attack_fgsm)->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(attack_iterated, bim, AttackKind::BIM)->Arg(40)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(attack_iterated, pgd, AttackKind::PGD)->Arg(40)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(attack_iterated, pgd_restarts, AttackKind::PGD_R)->Arg(40)->Unit(benchmark::kMillisecond);
