#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rulkit/cmapss.hpp"
#include "rulkit/model.hpp"

namespace rulkit {

enum class AttackKind { FGSM, BIM, PGD, PGD_R };

AttackKind attack_kind_from_string(const std::string& s);
std::string to_string(AttackKind k);

struct AttackConfig {
    AttackKind kind = AttackKind::FGSM;
    double epsilon = 0.3;  // l-inf budget, >= 0
    double alpha = 0.0;    // per-step size; <= 0 means eps/iters (bim) or 2*eps/iters (pgd, pgd_r)
    int iterations = 100;  // iterative kinds
    int restarts = 30;     // PGD_R
    std::uint64_t seed = 0;
    bool clamp_unit = false;  // additionally clamp the result to [0, 1]

    double resolved_alpha() const;
    std::string label() const;  // e.g. "pgd_r(eps=0.3)"
};

struct AdversarialWindow {
    TimeWindow original;
    Tensor perturbed;
    double achieved_loss = 0.0;  // (pred - label)^2 at the final perturbed input
    AttackConfig config;
};

// Single gradient-sign step of size epsilon; sign(0) contributes nothing.
AdversarialWindow mts_fgsm(const RegressionModel& model, const TimeWindow& window, double epsilon,
                           bool clamp_unit = false);

// iterations of alpha-sign steps from X, each projected onto the eps-ball.
AdversarialWindow mts_bim(const RegressionModel& model, const TimeWindow& window, const AttackConfig& cfg);

// BIM started from a uniform random point inside the eps-ball (seeded).
AdversarialWindow mts_pgd(const RegressionModel& model, const TimeWindow& window, const AttackConfig& cfg);

// Repeats mts_pgd with independent random starts, keeping the restart with
// maximal final loss. Restart r draws from mix(cfg.seed, r), so restarts=1
// reproduces mts_pgd bit for bit and adding restarts never lowers the loss.
AdversarialWindow mts_pgd_r(const RegressionModel& model, const TimeWindow& window, const AttackConfig& cfg);

// Runs cfg.kind on every window with a per-window stream mix(cfg.seed, i):
// results are independent of ordering and of any parallel fan-out.
std::vector<AdversarialWindow> attack_dataset(const RegressionModel& model,
                                              const std::vector<TimeWindow>& windows, const AttackConfig& cfg);

// RMSE of the model over the perturbed windows against the original labels.
double adversarial_rmse(const RegressionModel& model, const std::vector<AdversarialWindow>& attacked);

// Perturbed windows as TimeWindows (labels preserved), e.g. for retraining.
std::vector<TimeWindow> as_windows(const std::vector<AdversarialWindow>& attacked);

}  // namespace rulkit
