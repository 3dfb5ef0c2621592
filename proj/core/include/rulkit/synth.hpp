#pragma once

#include <cstdint>
#include <filesystem>

namespace rulkit {

// Writes a seeded synthetic turbofan dataset in the standard 26-column text
// layout (train_FD001.txt, test_FD001.txt, RUL_FD001.txt). Engines follow a
// per-unit power-law degradation drift with per-engine sensing strength and
// per-engine channel calibration offsets, plus bounded uniform sensor noise;
// seven sensor channels are constant, mirroring the real FD001 layout, and
// the test split always contains exactly 37 engines with >= 150 observed
// cycles.
struct SynthConfig {
    std::uint64_t seed = 77;
    int train_engines = 100;
    int test_engines = 100;
    double noise_level = 0.10;  // noise half-width as a fraction of each sensor's drift span
};

void write_synthetic_dataset(const std::filesystem::path& dir, const SynthConfig& cfg = {});

}  // namespace rulkit
