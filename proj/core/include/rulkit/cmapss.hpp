#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rulkit/tensor.hpp"

namespace rulkit {

// One engine's sensor history, [cycles x features], cycles 1..dim(0).
struct EngineTrace {
    int id = 0;
    Tensor sensors;
};

struct SensorData {
    std::vector<EngineTrace> engines;
    int n_features = 0;

    const EngineTrace& by_id(int id) const;
};

// Parses the 26-column turbofan text format (id, cycle, 3 settings, 21
// sensors). Settings are validated then dropped; cycles must run 1..L per
// engine. Errors carry file:line.
SensorData load_raw(const std::filesystem::path& file);

// Reads the one-number-per-line final-RUL file for the test engines.
std::vector<double> load_rul_file(const std::filesystem::path& file);

// 0-based indices of sensors whose variance over every training row falls
// below tol; order ascending.
std::vector<int> constant_sensors(const SensorData& train, double tol = 1e-12);

SensorData drop_sensors(const SensorData& data, const std::vector<int>& drop);

struct NormStats {
    std::vector<double> lo, hi;  // per retained feature
};

NormStats minmax_stats(const SensorData& train);

// (x - lo) / (hi - lo); degenerate features (hi == lo) map to 0.
SensorData apply_norm(const SensorData& data, const NormStats& stats);

// Piecewise RUL for an engine whose failure is at cycle total_cycles: entry
// t (0-based row, cycle t+1) is min(cap, total_cycles - (t+1)).
std::vector<double> rul_labels(int total_cycles, double cap);

struct TimeWindow {
    Tensor values;  // [T x F]
    double label = 0.0;
    int engine_id = 0;
    int end_cycle = 0;  // 1-based cycle of the window's last row
};

// Sliding windows over every engine; label = capped RUL at the window's
// last cycle. Engines shorter than T yield none. Ordered by (id, end_cycle).
std::vector<TimeWindow> window(const SensorData& data, double rul_cap, int T, int stride = 1);

// One window per engine ending at its last observed cycle, for final-RUL
// evaluation; engines shorter than T are left-padded with their earliest
// row. final_rul[i] pairs with data.engines[i]; labels are capped.
std::vector<TimeWindow> final_windows(const SensorData& data, const std::vector<double>& final_rul,
                                      double rul_cap, int T);

std::vector<std::size_t> indices_min_cycles(const SensorData& data, int min_cycles);
SensorData subset_min_cycles(const SensorData& data, int min_cycles);

// The prepared dataset: constant sensors dropped, min-max normalized from
// train stats, test final RULs attached.
struct Dataset {
    SensorData train, test;
    NormStats stats;
    std::vector<int> dropped;  // original 0-based sensor indices
    std::vector<double> test_final_rul;
    double rul_cap = 130.0;
};

// Full pipeline over a directory holding train_FD001.txt / test_FD001.txt /
// RUL_FD001.txt.
Dataset prepare_dataset(const std::filesystem::path& dir, double rul_cap = 130.0, double tol = 1e-12);

void save_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace rulkit
