#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>
#include <vector>

#include "rulkit/cmapss.hpp"
#include "rulkit/model.hpp"
#include "rulkit/rng.hpp"

namespace testutil {

// Unique scratch directory, removed on scope exit.
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path = std::filesystem::temp_directory_path() /
               ("rulkit_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

inline rulkit::TimeWindow make_window(rulkit::Rng& rng, int T, int F, double label) {
    rulkit::dvec v(static_cast<std::size_t>(T) * F);
    for (double& x : v) x = rng.uniform();
    rulkit::TimeWindow w;
    w.values = rulkit::Tensor({T, F}, std::move(v));
    w.label = label;
    w.engine_id = 1;
    w.end_cycle = T;
    return w;
}

inline std::vector<rulkit::TimeWindow> make_windows(std::uint64_t seed, int n, int T, int F) {
    rulkit::Rng rng(seed);
    std::vector<rulkit::TimeWindow> out;
    for (int i = 0; i < n; ++i) out.push_back(make_window(rng, T, F, rng.uniform(0.0, 130.0)));
    return out;
}

inline rulkit::RegressionModel make_model(rulkit::Arch arch, std::vector<int> hidden, int T, int F,
                                          std::uint64_t seed) {
    rulkit::ModelSpec spec;
    spec.arch = arch;
    spec.hidden = std::move(hidden);
    spec.seq_len = T;
    spec.input_dim = F;
    spec.seed = seed;
    return rulkit::build(spec);
}

}  // namespace testutil
