#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rulkit/cmapss.hpp"
#include "rulkit/network.hpp"

namespace rulkit {

enum class Arch { CNN, LSTM, GRU, BiLSTM };

Arch arch_from_string(const std::string& s);
std::string to_string(Arch a);

struct ModelSpec {
    Arch arch = Arch::GRU;
    std::vector<int> hidden;  // per-layer units (CNN: filter counts, kernel 5)
    int seq_len = 80;
    int input_dim = 14;
    int batch_size = 64;
    int epochs = 0;
    double lr = 1e-3;
    std::string optimizer = "adam";  // "adam" | "sgd"
    std::uint64_t seed = 1;
    // Targets are divided by this before the MSE and predictions multiplied
    // back, so the head fits values near [0,1] instead of raw cycle counts.
    // Bounded recurrent states cannot span 0..130 directly: forcing them to
    // saturates tanh and kills input sensitivity. Set to the RUL cap.
    double label_scale = 130.0;
};

struct RegressionModel {
    ModelSpec spec;
    Network net;
    std::vector<double> history;  // mean train loss per epoch
    NormStats stats;              // carried from the dataset for provenance
};

// Seeded parameter init; identical spec+seed gives identical bits.
RegressionModel build(const ModelSpec& spec);

// Mini-batch MSE training on scaled targets (label / label_scale). Per-epoch
// seeded shuffling; history gains one entry per epoch, reported in raw label
// units squared; throws on NaN loss with learning-rate guidance.
using EpochHook = std::function<void(int epoch, double loss)>;
void train(RegressionModel& model, const std::vector<TimeWindow>& windows, const EpochHook& hook = {});

// One prediction per window, computed strictly per-sample so output bits
// never depend on batch composition or ordering.
std::vector<double> predict_rul(const RegressionModel& model, const std::vector<TimeWindow>& windows);

double rmse(std::span<const double> predictions, std::span<const double> labels);

// Convenience: RMSE of the model across windows against their labels.
double eval_rmse(const RegressionModel& model, const std::vector<TimeWindow>& windows);

struct TracePoint {
    int cycle;
    double predicted;
    double truth;
};

// One prediction per cycle from the first full window through the end of
// the trace. final_rul is the RUL at the last observed cycle (0 for run-to-
// failure traces).
std::vector<TracePoint> piecewise_rul_trace(const RegressionModel& model, const EngineTrace& trace,
                                            double final_rul, double rul_cap);

void save_model(const std::filesystem::path& path, const RegressionModel& model);
RegressionModel load_model(const std::filesystem::path& path);
// Typed load: refuses checkpoints of a different architecture.
RegressionModel load_model_as(const std::filesystem::path& path, Arch expected);

}  // namespace rulkit
