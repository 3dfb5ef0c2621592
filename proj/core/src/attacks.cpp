#include "rulkit/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rulkit/errors.hpp"
#include "rulkit/rng.hpp"

namespace rulkit {

AttackKind attack_kind_from_string(const std::string& s) {
    if (s == "fgsm") return AttackKind::FGSM;
    if (s == "bim") return AttackKind::BIM;
    if (s == "pgd") return AttackKind::PGD;
    if (s == "pgd_r") return AttackKind::PGD_R;
    throw ConfigError("unknown attack kind '" + s + "' (expected fgsm|bim|pgd|pgd_r)");
}

std::string to_string(AttackKind k) {
    switch (k) {
        case AttackKind::FGSM: return "fgsm";
        case AttackKind::BIM: return "bim";
        case AttackKind::PGD: return "pgd";
        case AttackKind::PGD_R: return "pgd_r";
    }
    return "?";
}

double AttackConfig::resolved_alpha() const {
    if (alpha > 0.0) return alpha;
    // BIM walks the budget exactly once; PGD variants overshoot and rely on
    // projection, which explores the ball boundary more aggressively.
    const double scale = (kind == AttackKind::PGD || kind == AttackKind::PGD_R) ? 2.0 : 1.0;
    return scale * epsilon / static_cast<double>(iterations);
}

std::string AttackConfig::label() const {
    std::ostringstream os;
    os << to_string(kind) << "(eps=" << epsilon << ")";
    return os.str();
}

namespace {

void validate(const AttackConfig& cfg) {
    if (cfg.epsilon < 0.0) throw ConfigError("attack: epsilon must be >= 0");
    if (cfg.kind != AttackKind::FGSM && cfg.iterations < 1) throw ConfigError("attack: iterations must be >= 1");
    if (cfg.kind == AttackKind::PGD_R && cfg.restarts < 1) throw ConfigError("attack: restarts must be >= 1");
}

double sample_loss(const RegressionModel& model, const Tensor& x, double label) {
    const double d = forward(model.net, x) * model.spec.label_scale - label;
    return d * d;
}

AdversarialWindow identity_result(const RegressionModel& model, const TimeWindow& w, const AttackConfig& cfg) {
    AdversarialWindow out;
    out.original = w;
    out.perturbed = w.values;  // bit-identical copy
    out.achieved_loss = sample_loss(model, w.values, w.label);
    out.config = cfg;
    return out;
}

void clamp_ball(Tensor& x, const Tensor& center, double eps, bool clamp_unit) {
    for (std::int64_t i = 0; i < x.size(); ++i) {
        const double lo = center[i] - eps, hi = center[i] + eps;
        x[i] = std::clamp(x[i], lo, hi);
        if (clamp_unit) x[i] = std::clamp(x[i], 0.0, 1.0);
    }
}

// The shared step/project loop; start == window.values for BIM, a random
// ball point for PGD.
AdversarialWindow bim_loop(const RegressionModel& model, const TimeWindow& w, const AttackConfig& cfg,
                           Tensor start) {
    const double alpha = cfg.resolved_alpha();
    Tensor x = std::move(start);
    for (int i = 0; i < cfg.iterations; ++i) {
        const GradientBundle gb = gradients(model.net, x, w.label / model.spec.label_scale);
        for (std::int64_t j = 0; j < x.size(); ++j) {
            const double g = gb.input_grad[j];
            x[j] += alpha * (g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0));
        }
        clamp_ball(x, w.values, cfg.epsilon, cfg.clamp_unit);
    }
    AdversarialWindow out;
    out.original = w;
    out.achieved_loss = sample_loss(model, x, w.label);
    out.perturbed = std::move(x);
    out.config = cfg;
    return out;
}

Tensor random_start(const TimeWindow& w, double eps, Rng& rng) {
    Tensor x = w.values;
    for (std::int64_t i = 0; i < x.size(); ++i) x[i] += rng.uniform(-eps, eps);
    return x;
}

AdversarialWindow pgd_single(const RegressionModel& model, const TimeWindow& w, const AttackConfig& cfg,
                             std::uint64_t stream_seed) {
    Rng rng(stream_seed);
    Tensor start = random_start(w, cfg.epsilon, rng);
    if (cfg.clamp_unit) clamp_ball(start, w.values, cfg.epsilon, true);
    return bim_loop(model, w, cfg, std::move(start));
}

}  // namespace

AdversarialWindow mts_fgsm(const RegressionModel& model, const TimeWindow& window, double epsilon,
                           bool clamp_unit) {
    if (epsilon < 0.0) throw ConfigError("attack: epsilon must be >= 0");
    AttackConfig cfg;
    cfg.kind = AttackKind::FGSM;
    cfg.epsilon = epsilon;
    cfg.clamp_unit = clamp_unit;
    if (epsilon == 0.0) return identity_result(model, window, cfg);
    const GradientBundle gb = gradients(model.net, window.values, window.label / model.spec.label_scale);
    Tensor x = window.values;
    for (std::int64_t i = 0; i < x.size(); ++i) {
        const double g = gb.input_grad[i];
        x[i] += epsilon * (g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0));
    }
    if (cfg.clamp_unit) clamp_ball(x, window.values, epsilon, true);
    AdversarialWindow out;
    out.original = window;
    out.achieved_loss = sample_loss(model, x, window.label);
    out.perturbed = std::move(x);
    out.config = cfg;
    return out;
}

AdversarialWindow mts_bim(const RegressionModel& model, const TimeWindow& window, const AttackConfig& cfg) {
    validate(cfg);
    if (cfg.epsilon == 0.0) return identity_result(model, window, cfg);
    return bim_loop(model, window, cfg, window.values);
}

AdversarialWindow mts_pgd(const RegressionModel& model, const TimeWindow& window, const AttackConfig& cfg) {
    validate(cfg);
    if (cfg.epsilon == 0.0) return identity_result(model, window, cfg);
    return pgd_single(model, window, cfg, mix_seed(cfg.seed, 0));
}

AdversarialWindow mts_pgd_r(const RegressionModel& model, const TimeWindow& window, const AttackConfig& cfg) {
    validate(cfg);
    if (cfg.epsilon == 0.0) return identity_result(model, window, cfg);
    AdversarialWindow best;
    for (int r = 0; r < cfg.restarts; ++r) {
        AdversarialWindow cand = pgd_single(model, window, cfg, mix_seed(cfg.seed, static_cast<std::uint64_t>(r)));
        if (r == 0 || cand.achieved_loss > best.achieved_loss) best = std::move(cand);
    }
    return best;
}

std::vector<AdversarialWindow> attack_dataset(const RegressionModel& model,
                                              const std::vector<TimeWindow>& windows, const AttackConfig& cfg) {
    validate(cfg);
    std::vector<AdversarialWindow> out;
    out.reserve(windows.size());
    for (std::size_t i = 0; i < windows.size(); ++i) {
        AttackConfig wcfg = cfg;
        wcfg.seed = mix_seed(cfg.seed, 0x9000 + i);
        switch (cfg.kind) {
            case AttackKind::FGSM: out.push_back(mts_fgsm(model, windows[i], cfg.epsilon, cfg.clamp_unit)); break;
            case AttackKind::BIM: out.push_back(mts_bim(model, windows[i], wcfg)); break;
            case AttackKind::PGD: out.push_back(mts_pgd(model, windows[i], wcfg)); break;
            case AttackKind::PGD_R: out.push_back(mts_pgd_r(model, windows[i], wcfg)); break;
        }
    }
    return out;
}

double adversarial_rmse(const RegressionModel& model, const std::vector<AdversarialWindow>& attacked) {
    if (attacked.empty()) throw ConfigError("adversarial_rmse: empty input");
    std::vector<double> preds, labels;
    preds.reserve(attacked.size());
    labels.reserve(attacked.size());
    for (const auto& a : attacked) {
        preds.push_back(forward(model.net, a.perturbed) * model.spec.label_scale);
        labels.push_back(a.original.label);
    }
    return rmse(preds, labels);
}

std::vector<TimeWindow> as_windows(const std::vector<AdversarialWindow>& attacked) {
    std::vector<TimeWindow> out;
    out.reserve(attacked.size());
    for (const auto& a : attacked) {
        TimeWindow w = a.original;
        w.values = a.perturbed;
        out.push_back(std::move(w));
    }
    return out;
}

}  // namespace rulkit
