#pragma once

#include <vector>

#include "rulkit/model.hpp"
#include "rulkit/rng.hpp"

namespace bench {

// Paper-width model of the given arch with its usual window length.
inline rulkit::RegressionModel make_model(rulkit::Arch arch) {
    rulkit::ModelSpec spec;
    spec.arch = arch;
    switch (arch) {
        case rulkit::Arch::CNN:
            spec.hidden = {64, 64, 64, 64};
            spec.seq_len = 100;
            break;
        case rulkit::Arch::LSTM:
            spec.hidden = {100, 100, 100, 100};
            spec.seq_len = 80;
            break;
        case rulkit::Arch::GRU:
            spec.hidden = {100, 100, 100};
            spec.seq_len = 80;
            break;
        case rulkit::Arch::BiLSTM:
            spec.hidden = {180, 180, 120};
            spec.seq_len = 60;
            break;
    }
    spec.input_dim = 14;
    spec.seed = 7;
    return rulkit::build(spec);
}

inline std::vector<rulkit::TimeWindow> make_windows(int n, int T, int F, std::uint64_t seed = 99) {
    rulkit::Rng rng(seed);
    std::vector<rulkit::TimeWindow> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        rulkit::dvec v(static_cast<std::size_t>(T) * F);
        for (double& x : v) x = rng.uniform();
        rulkit::TimeWindow w;
        w.values = rulkit::Tensor({T, F}, std::move(v));
        w.label = rng.uniform(0.0, 130.0);
        w.engine_id = 1;
        w.end_cycle = T + i;
        out.push_back(std::move(w));
    }
    return out;
}

}  // namespace bench
