#include <benchmark/benchmark.h>

#include "bench_common.hpp"
#include "rulkit/network.hpp"

using namespace rulkit;

namespace {

void forward_arch(benchmark::State& state, Arch arch) {
    const RegressionModel m = bench::make_model(arch);
    const auto w = bench::make_windows(1, m.spec.seq_len, m.spec.input_dim)[0];
    for (auto _ : state) benchmark::DoNotOptimize(forward(m.net, w.values));
    state.SetItemsProcessed(state.iterations());
}

void gradients_arch(benchmark::State& state, Arch arch) {
    const RegressionModel m = bench::make_model(arch);
    const auto w = bench::make_windows(1, m.spec.seq_len, m.spec.input_dim)[0];
    for (auto _ : state) benchmark::DoNotOptimize(gradients(m.net, w.values, w.label / m.spec.label_scale));
    state.SetItemsProcessed(state.iterations());
}

void batch_grad_gru(benchmark::State& state) {
    const RegressionModel m = bench::make_model(Arch::GRU);
    const int B = static_cast<int>(state.range(0));
    const auto ws = bench::make_windows(B, m.spec.seq_len, m.spec.input_dim);
    std::vector<const double*> ptrs;
    std::vector<double> labels;
    for (const auto& w : ws) {
        ptrs.push_back(w.values.data());
        labels.push_back(w.label / m.spec.label_scale);
    }
    ParameterSet grads = m.net.params.zeros_like();
    for (auto _ : state) benchmark::DoNotOptimize(batch_loss_grad(m.net, ptrs, labels, grads));
    state.SetItemsProcessed(state.iterations() * B);
}

}  // namespace

BENCHMARK_CAPTURE(forward_arch, cnn, Arch::CNN)->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(forward_arch, lstm, Arch::LSTM)->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(forward_arch, gru, Arch::GRU)->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(forward_arch, bilstm, Arch::BiLSTM)->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(gradients_arch, cnn, Arch::CNN)->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(gradients_arch, lstm, Arch::LSTM)->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(gradients_arch, gru, Arch::GRU)->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(gradients_arch, bilstm, Arch::BiLSTM)->Unit(benchmark::kMicrosecond);
BENCHMARK(batch_grad_gru)->Arg(32)->Arg(200)->Unit(benchmark::kMillisecond);
