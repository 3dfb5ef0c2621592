#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rulkit/attacks.hpp"
#include "rulkit/cmapss.hpp"
#include "rulkit/defense.hpp"
#include "rulkit/model.hpp"

namespace rulkit {

// ----------------------------------------------------------------- metrics

struct AttackImpact {
    double clean_rmse = 0;
    struct Row {
        AttackConfig cfg;
        double rmse = 0;
        double multiplier = 0;  // rmse / clean_rmse
    };
    std::vector<Row> rows;
};

// Clean RMSE plus one attacked RMSE per config over the evaluation windows.
AttackImpact eval_attack_impact(const RegressionModel& model, const std::vector<TimeWindow>& windows,
                                const std::vector<AttackConfig>& attacks);

struct TransferMatrix {
    std::vector<std::string> models;
    std::vector<AttackConfig> attacks;
    std::vector<double> target_clean;                   // per target, on its own windows
    std::vector<std::vector<std::vector<double>>> rmse;  // [source][target][attack]; diagonal = white-box
};

// Crafts each attack on every source model's final windows, splices the
// perturbation into the normalized trace, re-windows at each target's
// sequence length, and evaluates. Traces must share the feature count.
TransferMatrix transferability(const std::vector<const RegressionModel*>& models,
                               const std::vector<std::string>& names, const SensorData& traces,
                               const std::vector<double>& final_rul, double rul_cap,
                               const std::vector<AttackConfig>& attacks);

struct SweepCurve {
    AttackKind kind;
    std::vector<double> rmse;  // parallel to epsilons
};

struct SweepResult {
    std::vector<double> epsilons;
    double clean_rmse = 0;
    std::vector<SweepCurve> curves;
};

// cfg_proto supplies iterations/restarts/alpha/seed; kind and epsilon vary.
SweepResult epsilon_sweep(const RegressionModel& model, const std::vector<TimeWindow>& windows,
                          const std::vector<AttackKind>& kinds, const std::vector<double>& epsilons,
                          const AttackConfig& cfg_proto);

struct DefenseEvalInput {
    std::string name;
    const RegressionModel* base = nullptr;    // undefended
    const RegressionModel* plain = nullptr;   // may be null
    const RegressionModel* approx = nullptr;  // may be null
};

struct DefenseReportRow {
    std::string model, attack;
    double eps = 0;
    double e = 0, e_att = 0;
    std::optional<double> e_def_plain, e_def_approx;
    std::optional<double> e_def_plain_clean, e_def_approx_clean;
    double alpha = 0;
    std::optional<double> beta_plain, beta_approx;
};

// Adversarial examples are crafted once against each base model; defended
// models are evaluated on those same examples (black-box-to-the-defense
// protocol). alpha/beta are recomputed from the stored e/e'/e_hat.
std::vector<DefenseReportRow> defense_report(const std::vector<DefenseEvalInput>& inputs,
                                             const std::vector<TimeWindow>& eval_windows,
                                             const std::vector<AttackConfig>& attacks);

// ----------------------------------------------------------------- config

struct ModelEntry {
    std::string name;
    ModelSpec spec;
    int train_stride = 1;
    // 0 = derive label_scale from the dataset's RUL cap at training time.
    double label_scale = 0.0;
};

struct SweepSection {
    std::vector<std::string> models;
    std::vector<AttackKind> kinds;
    std::vector<double> epsilons;
    int iterations = 40;
    int restarts = 10;
    double alpha = 0.0;  // <= 0: per-epsilon alpha = eps/iterations
    std::uint64_t seed = 404;
};

struct DefenseSection {
    std::vector<DefenseMode> modes;
    std::vector<std::string> models;
    int train_windows = 96;
    std::vector<AttackConfig> attack_list;
    int epochs_plain = 30;
    int epochs_approx = 240;
    int batch_size = 64;
    double lr = 1e-3;
    int weight_groups = 16;
    bool index_basis = false;
    std::string optimizer = "adam";
    std::uint64_t seed = 505;
};

struct TransferSection {
    std::vector<std::string> models;
    std::vector<AttackConfig> attacks;
};

struct RunConfig {
    std::filesystem::path run_dir;
    std::uint64_t seed = 7;
    std::string data_source = "synthetic";  // "synthetic" | "dir"
    std::filesystem::path data_dir;         // required for "dir"
    std::uint64_t synth_seed = 77;
    double synth_noise = 0.10;
    double rul_cap = 130;
    int min_cycles = 150;
    std::vector<ModelEntry> models;
    std::vector<AttackConfig> attacks;
    SweepSection sweep;
    DefenseSection defense;
    TransferSection transfer;

    const ModelEntry& model_entry(const std::string& name) const;
};

// Strict parse: unknown keys anywhere are hard errors.
RunConfig parse_config_text(const std::string& json_text);
RunConfig parse_config(const std::filesystem::path& file);

// ----------------------------------------------------------------- stages

struct StageOptions {
    bool force = false;
    bool quiet = false;
};

void stage_prep(const RunConfig& cfg, const StageOptions& opt = {});
void stage_train(const RunConfig& cfg, const StageOptions& opt = {});
void stage_attack(const RunConfig& cfg, const StageOptions& opt = {});
void stage_defend(const RunConfig& cfg, const StageOptions& opt = {});
void stage_report(const RunConfig& cfg, const StageOptions& opt = {});
void stage_sweep(const RunConfig& cfg, const StageOptions& opt = {});
void stage_transfer(const RunConfig& cfg, const StageOptions& opt = {});

// Formats a double with shortest round-trip digits (locale-free, stable).
std::string format_double(double v);

}  // namespace rulkit
