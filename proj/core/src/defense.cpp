#include "rulkit/defense.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "rulkit/errors.hpp"
#include "rulkit/optim.hpp"
#include "rulkit/rng.hpp"

namespace rulkit {

DefenseMode defense_mode_from_string(const std::string& s) {
    if (s == "plain") return DefenseMode::Plain;
    if (s == "approximate") return DefenseMode::Approximate;
    throw ConfigError("unknown defense mode '" + s + "' (expected plain|approximate)");
}

std::string to_string(DefenseMode m) { return m == DefenseMode::Plain ? "plain" : "approximate"; }

std::vector<TimeWindow> gen_adv_dataset(const RegressionModel& model, const std::vector<TimeWindow>& windows,
                                        const std::vector<AttackConfig>& attack_list) {
    if (attack_list.empty()) throw ConfigError("gen_adv_dataset: attack list must be non-empty");
    std::vector<TimeWindow> out = windows;
    out.reserve(windows.size() * (1 + attack_list.size()));
    for (const auto& cfg : attack_list) {
        auto adv = as_windows(attack_dataset(model, windows, cfg));
        out.insert(out.end(), std::make_move_iterator(adv.begin()), std::make_move_iterator(adv.end()));
    }
    return out;
}

namespace {

// Gaussian elimination with partial pivoting on the 3x3 normal equations;
// returns false when the system is (near-)singular.
bool solve3(double A[3][3], double b[3], double out[3]) {
    int piv[3] = {0, 1, 2};
    for (int c = 0; c < 3; ++c) {
        int best = c;
        for (int r = c + 1; r < 3; ++r)
            if (std::fabs(A[piv[r]][c]) > std::fabs(A[piv[best]][c])) best = r;
        std::swap(piv[c], piv[best]);
        const double d = A[piv[c]][c];
        if (std::fabs(d) < 1e-300) return false;
        for (int r = c + 1; r < 3; ++r) {
            const double f = A[piv[r]][c] / d;
            for (int k = c; k < 3; ++k) A[piv[r]][k] -= f * A[piv[c]][k];
            b[piv[r]] -= f * b[piv[c]];
        }
    }
    for (int c = 2; c >= 0; --c) {
        double acc = b[piv[c]];
        for (int k = c + 1; k < 3; ++k) acc -= A[piv[c]][k] * out[k];
        out[c] = acc / A[piv[c]][c];
    }
    return std::isfinite(out[0]) && std::isfinite(out[1]) && std::isfinite(out[2]);
}

struct FitResult {
    double q0 = 0, q1 = 0, q2 = 0;
    bool exact = false;
};

// Least-squares fit of y ~ q0 + q1*x + q2*x^2. With <= 3 distinct x values
// the minimal-degree interpolant reproduces the data exactly.
FitResult fit_quadratic(std::span<const double> xs, std::span<const double> ys) {
    std::set<double> distinct(xs.begin(), xs.end());
    FitResult fr;
    if (distinct.size() <= 3) {
        fr.exact = true;
        std::vector<double> dx(distinct.begin(), distinct.end());
        // y for each distinct x (identical x always pairs with identical y here)
        std::vector<double> dy(dx.size());
        for (std::size_t i = 0; i < dx.size(); ++i)
            for (std::size_t j = 0; j < xs.size(); ++j)
                if (xs[j] == dx[i]) dy[i] = ys[j];
        if (dx.size() == 1) {
            fr.q0 = dy[0];
        } else if (dx.size() == 2) {
            fr.q1 = (dy[1] - dy[0]) / (dx[1] - dx[0]);
            fr.q0 = dy[0] - fr.q1 * dx[0];
        } else {
            double A[3][3], b[3], q[3];
            for (int r = 0; r < 3; ++r) {
                A[r][0] = 1.0;
                A[r][1] = dx[static_cast<std::size_t>(r)];
                A[r][2] = dx[static_cast<std::size_t>(r)] * dx[static_cast<std::size_t>(r)];
                b[r] = dy[static_cast<std::size_t>(r)];
            }
            if (!solve3(A, b, q)) {  // cannot happen for distinct nodes; keep a safe fallback
                fr.q0 = dy[0];
                fr.q1 = fr.q2 = 0.0;
            } else {
                fr.q0 = q[0];
                fr.q1 = q[1];
                fr.q2 = q[2];
            }
        }
        return fr;
    }
    double s1 = 0, s2 = 0, s3 = 0, s4 = 0, sy = 0, sxy = 0, sx2y = 0;
    const double n = static_cast<double>(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double x = xs[i], y = ys[i];
        const double x2 = x * x;
        s1 += x;
        s2 += x2;
        s3 += x2 * x;
        s4 += x2 * x2;
        sy += y;
        sxy += x * y;
        sx2y += x2 * y;
    }
    double A[3][3] = {{n, s1, s2}, {s1, s2, s3}, {s2, s3, s4}};
    double b[3] = {sy, sxy, sx2y};
    double q[3];
    if (!solve3(A, b, q)) {
        fr.exact = true;  // rank-deficient: reproduce exactly via identity-on-value
        fr.q0 = ys[0];
        return fr;
    }
    fr.q0 = q[0];
    fr.q1 = q[1];
    fr.q2 = q[2];
    return fr;
}

}  // namespace

std::pair<ParameterSet, QuadraticFit> quadratic_approx(const ParameterSet& params, int m, bool index_basis) {
    if (m < 1) throw ConfigError("quadratic_approx: m must be >= 1");
    ParameterSet out = params;
    QuadraticFit fits;
    for (auto& entry : out.entries()) {
        auto& w = entry.value.values();
        const auto n = static_cast<std::int64_t>(w.size());
        for (int g = 0; g < m; ++g) {
            const std::int64_t begin = n * g / m;
            const std::int64_t end = n * (g + 1) / m;
            if (begin >= end) continue;
            const auto len = static_cast<std::size_t>(end - begin);
            QuadraticFit::Group grp;
            grp.param = entry.name;
            grp.begin = begin;
            grp.end = end;

            std::span<const double> ys(w.data() + begin, len);
            FitResult fr;
            std::vector<double> xs_store;
            std::span<const double> xs;
            if (index_basis) {
                xs_store.resize(len);
                const double denom = len > 1 ? static_cast<double>(len - 1) : 1.0;
                for (std::size_t i = 0; i < len; ++i) xs_store[i] = static_cast<double>(i) / denom;
                xs = xs_store;
            } else {
                xs = ys;  // fit q(w) ~ w on the weight values themselves
            }
            fr = fit_quadratic(xs, ys);

            grp.q0 = fr.q0;
            grp.q1 = fr.q1;
            grp.q2 = fr.q2;
            grp.exact = fr.exact;
            double max_res = 0.0;
            for (std::size_t i = 0; i < len; ++i) {
                const double x = xs[i];
                const double approx = fr.q0 + fr.q1 * x + fr.q2 * x * x;
                max_res = std::max(max_res, std::fabs(approx - ys[i]));
                w[static_cast<std::size_t>(begin) + i] = approx;
            }
            grp.max_residual = max_res;
            fits.groups.push_back(std::move(grp));
        }
    }
    return {std::move(out), std::move(fits)};
}

RegressionModel adversarial_train(const RegressionModel& model, const std::vector<TimeWindow>& augmented,
                                  const DefenseConfig& cfg, const EpochHook& hook) {
    if (cfg.epochs < 0) throw ConfigError("defense: epochs must be >= 0");
    if (cfg.batch_size < 1) throw ConfigError("defense: batch_size must be >= 1");
    if (!(cfg.lr > 0)) throw ConfigError("defense: learning rate must be positive");
    if (cfg.optimizer != "adam" && cfg.optimizer != "sgd")
        throw ConfigError("defense: optimizer must be adam or sgd");
    RegressionModel out = model;
    if (cfg.epochs == 0) return out;
    if (augmented.empty()) throw RuntimeError("defense: empty augmented dataset");

    const std::size_t n = augmented.size();
    const auto bs = static_cast<std::size_t>(cfg.batch_size);
    std::vector<const double*> ptrs;
    std::vector<double> labels;
    ParameterSet grads = out.net.params.zeros_like();

    const double ls = out.spec.label_scale;
    auto run_batch = [&](std::size_t start, std::size_t stop, const std::vector<std::size_t>& order) {
        ptrs.clear();
        labels.clear();
        for (std::size_t k = start; k < stop; ++k) {
            const auto& w = augmented[order[k]];
            ptrs.push_back(w.values.data());
            labels.push_back(w.label / ls);
        }
        return batch_loss_grad(out.net, ptrs, labels, grads);
    };

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    if (cfg.mode == DefenseMode::Plain) {
        Rng shuffle_rng(mix_seed(cfg.seed, 0xdef));
        AdamState adam = AdamState::init(out.net.params);
        const bool use_adam = cfg.optimizer == "adam";
        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            shuffle_rng.shuffle(order);
            double epoch_loss = 0.0;
            for (std::size_t start = 0; start < n; start += bs) {
                const std::size_t stop = std::min(n, start + bs);
                const double loss = run_batch(start, stop, order);
                if (!std::isfinite(loss)) throw RuntimeError("defense: loss diverged at epoch " + std::to_string(epoch));
                if (use_adam)
                    adam_update(out.net.params, grads, adam, cfg.lr);
                else
                    sgd_update(out.net.params, grads, cfg.lr);
                epoch_loss += loss * static_cast<double>(stop - start);
            }
            out.history.push_back(epoch_loss / static_cast<double>(n) * ls * ls);
            if (hook) hook(epoch, out.history.back());
        }
        return out;
    }

    // Approximate mode: per epoch, average the batch gradients over all
    // batches, snap weights onto their per-group quadratic fit, then take a
    // single averaged-gradient descent step.
    ParameterSet avg = out.net.params.zeros_like();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (auto& e : avg.entries()) e.value.fill(0.0);
        int batches = 0;
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += bs) {
            const std::size_t stop = std::min(n, start + bs);
            const double loss = run_batch(start, stop, order);
            if (!std::isfinite(loss)) throw RuntimeError("defense: loss diverged at epoch " + std::to_string(epoch));
            for (std::size_t e = 0; e < avg.entries().size(); ++e) {
                auto& acc = avg.entries()[e].value.values();
                const auto& g = grads.entries()[e].value.values();
                for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
            }
            ++batches;
            epoch_loss += loss * static_cast<double>(stop - start);
        }
        const double inv = 1.0 / static_cast<double>(batches);
        for (auto& e : avg.entries())
            for (auto& v : e.value.values()) v *= inv;
        out.net.params = quadratic_approx(out.net.params, cfg.weight_groups, cfg.index_basis).first;
        sgd_update(out.net.params, avg, cfg.lr);
        out.history.push_back(epoch_loss / static_cast<double>(n) * ls * ls);
        if (hook) hook(epoch, out.history.back());
    }
    return out;
}

Robustness robustness_metrics(double clean_rmse, double attacked_rmse, double defended_rmse) {
    if (clean_rmse < 0 || attacked_rmse < 0 || defended_rmse < 0)
        throw ConfigError("robustness_metrics: RMSE values must be >= 0");
    Robustness r;
    r.alpha = attacked_rmse - clean_rmse;
    r.beta = defended_rmse - clean_rmse;
    r.ordering_ok = clean_rmse < defended_rmse && defended_rmse < attacked_rmse;
    return r;
}

}  // namespace rulkit
