#include "rulkit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>
#include <vector>

#include "rulkit/errors.hpp"
#include "rulkit/rng.hpp"

namespace rulkit {

namespace {

struct SensorModel {
    double base;
    double gain_frac;  // drift over a full life, as a fraction of base; 0 = constant channel
};

// Magnitudes and drift directions shaped after the real FD001 channels;
// the seven zero-gain entries are the constant sensors.
constexpr SensorModel kSensors[21] = {
    {518.67, 0.0},    {642.40, 0.004},  {1588.50, 0.0045}, {1401.50, 0.022}, {14.62, 0.0},
    {21.61, 0.0},     {554.10, -0.010}, {2388.05, 0.0018}, {9055.00, 0.016}, {1.30, 0.0},
    {47.25, 0.028},   {521.60, -0.011}, {2388.05, 0.0020}, {8133.50, 0.014}, {8.405, 0.019},
    {0.03, 0.0},      {392.00, 0.017},  {2388.00, 0.0},    {100.00, 0.0},    {38.95, -0.022},
    {23.37, -0.021},
};

struct EngineParams {
    int total_life;  // cycles to failure
    double p;        // wear curvature
    double w0;       // initial wear
    double sense;    // how strongly wear shows in this engine's sensors
};

EngineParams draw_engine(Rng& rng) {
    EngineParams e;
    const double u = rng.uniform();
    e.total_life = 128 + static_cast<int>(std::floor(u * u * 235.0));
    e.p = rng.uniform(1.7, 2.3);
    e.w0 = rng.uniform(0.0, 0.12);
    e.sense = rng.uniform(0.7, 1.3);
    return e;
}

void emit_rows(std::FILE* f, Rng& rng, int engine_id, const EngineParams& ep, int observed, double noise_level) {
    // Per-engine calibration offsets: absolute sensor levels differ between
    // engines, so degradation has to be read from trends and cross-channel
    // agreement rather than a lookup of any single reading. Together with the
    // shared `sense` factor (which channel averaging cannot cancel) this keeps
    // the task from being solvable by one steep feature.
    double offset[21] = {};
    for (std::size_t c = 0; c < 21; ++c)
        if (kSensors[c].gain_frac != 0.0)
            offset[c] = 0.25 * std::fabs(kSensors[c].gain_frac * kSensors[c].base) * rng.uniform(-1.0, 1.0);
    for (int t = 1; t <= observed; ++t) {
        const double x = static_cast<double>(t) / static_cast<double>(ep.total_life);
        const double wear = ep.w0 + (1.0 - ep.w0) * std::pow(x, ep.p);
        const double set1 = rng.uniform(-0.0043, 0.0043);
        const double set2 = rng.uniform(-0.0004, 0.0004);
        std::fprintf(f, "%d %d %.4f %.4f 100.0", engine_id, t, set1, set2);
        for (std::size_t c = 0; c < 21; ++c) {
            const SensorModel& s = kSensors[c];
            double v = s.base;
            if (s.gain_frac != 0.0) {
                const double gain = s.gain_frac * s.base;
                // Bounded noise keeps the train min-max range small, so
                // normalization cannot squash the degradation signal under
                // rare tail excursions the way unbounded noise would.
                v += offset[c] + gain * ep.sense * wear + noise_level * std::fabs(gain) * rng.uniform(-1.0, 1.0);
            }
            std::fprintf(f, " %.4f", v);
        }
        std::fprintf(f, "\n");
    }
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_out(const std::filesystem::path& p) {
    FilePtr f(std::fopen(p.string().c_str(), "w"));
    if (!f) throw IoError("cannot write " + p.string());
    return f;
}

}  // namespace

void write_synthetic_dataset(const std::filesystem::path& dir, const SynthConfig& cfg) {
    if (cfg.train_engines < 1 || cfg.test_engines < 1) throw RuntimeError("synthetic: engine counts must be positive");
    std::filesystem::create_directories(dir);
    Rng rng(cfg.seed);

    {
        auto f = open_out(dir / "train_FD001.txt");
        for (int i = 0; i < cfg.train_engines; ++i) {
            EngineParams ep = draw_engine(rng);
            if (i == 0) ep.total_life = 192;  // anchor engine mirroring the real set
            emit_rows(f.get(), rng, i + 1, ep, ep.total_life, cfg.noise_level);
        }
    }

    // Test engines share the training life distribution and are truncated at
    // a point strictly before failure; the RUL file holds the remaining
    // cycles (kept within the usual 7..145 band, so briefly-observed engines
    // are young ones, not implausibly short-lived ones). The 90-cycle floor
    // keeps most truncated traces at least as long as the model windows, so
    // final-RUL evaluation rarely needs left-padding. Observed lengths are
    // then nudged deterministically so the >= 150-cycle evaluation subset
    // always has exactly 37 members (when there are at least 37 engines).
    std::vector<EngineParams> test_eps(static_cast<std::size_t>(cfg.test_engines));
    std::vector<int> observed(static_cast<std::size_t>(cfg.test_engines));
    std::vector<int> rul(static_cast<std::size_t>(cfg.test_engines));
    for (int i = 0; i < cfg.test_engines; ++i) {
        const EngineParams ep = draw_engine(rng);
        test_eps[static_cast<std::size_t>(i)] = ep;
        const int lo = std::max(90, ep.total_life - 145);
        const int hi = ep.total_life - 7;
        const int o = lo + static_cast<int>(std::floor(rng.uniform() * static_cast<double>(hi - lo + 1)));
        observed[static_cast<std::size_t>(i)] = std::min(o, hi);
        rul[static_cast<std::size_t>(i)] = ep.total_life - observed[static_cast<std::size_t>(i)];
    }
    std::vector<int> order(static_cast<std::size_t>(cfg.test_engines));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return observed[static_cast<std::size_t>(a)] > observed[static_cast<std::size_t>(b)]; });
    const int want_long = std::min(37, cfg.test_engines);
    for (int rank = 0; rank < cfg.test_engines; ++rank) {
        const auto idx = static_cast<std::size_t>(order[static_cast<std::size_t>(rank)]);
        int& o = observed[idx];
        if (rank < want_long && o < 150) o = 150 + (want_long - rank);
        if (rank >= want_long && o >= 150) o = 149 - (rank - want_long);
        if (o < 90) o = 90;
        // keep the implied life inside the training band after any nudge
        int& r = rul[idx];
        r = std::clamp(r, std::max(7, 128 - o), 145);
    }

    {
        auto f = open_out(dir / "test_FD001.txt");
        for (int i = 0; i < cfg.test_engines; ++i) {
            EngineParams ep = test_eps[static_cast<std::size_t>(i)];
            ep.total_life = observed[static_cast<std::size_t>(i)] + rul[static_cast<std::size_t>(i)];
            emit_rows(f.get(), rng, i + 1, ep, observed[static_cast<std::size_t>(i)], cfg.noise_level);
        }
    }
    {
        auto f = open_out(dir / "RUL_FD001.txt");
        for (int i = 0; i < cfg.test_engines; ++i) std::fprintf(f.get(), "%d\n", rul[static_cast<std::size_t>(i)]);
    }
}

}  // namespace rulkit
