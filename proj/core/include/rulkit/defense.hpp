#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rulkit/attacks.hpp"
#include "rulkit/model.hpp"

namespace rulkit {

enum class DefenseMode { Plain, Approximate };

DefenseMode defense_mode_from_string(const std::string& s);
std::string to_string(DefenseMode m);

struct DefenseConfig {
    std::vector<AttackConfig> attack_list;  // each entry carries its own eps
    DefenseMode mode = DefenseMode::Approximate;
    int epochs = 0;
    int batch_size = 64;
    double lr = 1e-3;
    int weight_groups = 16;          // m contiguous segments per parameter array
    bool index_basis = false;        // fit against normalized index instead of weight value
    std::string optimizer = "adam";  // plain mode only; approximate mode is defined by its own update
    std::uint64_t seed = 1;
};

// Clean windows followed by one adversarial copy per attack config, labels
// preserved: |out| = |windows| * (1 + |attack_list|).
std::vector<TimeWindow> gen_adv_dataset(const RegressionModel& model, const std::vector<TimeWindow>& windows,
                                        const std::vector<AttackConfig>& attack_list);

struct QuadraticFit {
    struct Group {
        std::string param;
        std::int64_t begin = 0, end = 0;  // [begin, end) within the array
        double q0 = 0, q1 = 0, q2 = 0;
        double max_residual = 0;
        bool exact = false;  // <= 3 distinct values, reproduced exactly
    };
    std::vector<Group> groups;
};

// Replaces each weight by q0 + q1*w + q2*w^2 with per-group least-squares
// coefficients; groups are m contiguous near-equal segments per parameter
// array. Groups with <= 3 distinct values are reproduced exactly; an
// index_basis fit uses x = normalized position instead of w.
std::pair<ParameterSet, QuadraticFit> quadratic_approx(const ParameterSet& params, int m,
                                                       bool index_basis = false);

// Hardens a trained model on an augmented dataset from gen_adv_dataset.
// Plain mode: ordinary seeded mini-batch training. Approximate mode, per
// epoch: average the batch gradients over all batches, replace weights by
// quadratic_approx, then apply one averaged-gradient descent step.
RegressionModel adversarial_train(const RegressionModel& model, const std::vector<TimeWindow>& augmented,
                                  const DefenseConfig& cfg, const EpochHook& hook = {});

struct Robustness {
    double alpha = 0;    // attacked - clean
    double beta = 0;     // defended - clean
    bool ordering_ok = true;  // e < e_hat < e_prime
};

Robustness robustness_metrics(double clean_rmse, double attacked_rmse, double defended_rmse);

}  // namespace rulkit
