#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "rulkit/attacks.hpp"
#include "rulkit/errors.hpp"

using namespace rulkit;
using testutil::make_windows;

namespace {

// pred = 2x on a single scalar step: gradients have a known closed form
RegressionModel linear_model() {
    RegressionModel m;
    m.spec.arch = Arch::GRU;
    m.spec.hidden = {1};
    m.spec.seq_len = 1;
    m.spec.input_dim = 1;
    m.spec.label_scale = 1.0;  // raw-unit toy model, no target scaling
    m.net = make_network(1, 1, {{LayerKind::Dense, 1, 0, Activation::None}}, Readout::LastState, 1);
    m.net.params.get("L0.dense.w")[0] = 2.0;
    m.net.params.get("L0.dense.b")[0] = 0.0;
    m.net.params.get("head.w")[0] = 1.0;
    m.net.params.get("head.b")[0] = 0.0;
    return m;
}

TimeWindow scalar_window(double x, double label) {
    TimeWindow w;
    w.values = Tensor({1, 1}, {x});
    w.label = label;
    return w;
}

double linf(const Tensor& a, const Tensor& b) { return Tensor::max_abs_diff(a, b); }

}  // namespace

TEST_CASE("attack kind strings round-trip") {
    for (AttackKind k : {AttackKind::FGSM, AttackKind::BIM, AttackKind::PGD, AttackKind::PGD_R})
        CHECK(attack_kind_from_string(to_string(k)) == k);
    CHECK_THROWS_AS(attack_kind_from_string("cw"), ConfigError);
}

TEST_CASE("fgsm closed form on a linear model") {
    const RegressionModel m = linear_model();
    // loss rises with pred: every coordinate moves up by exactly eps
    auto up = mts_fgsm(m, scalar_window(0.5, 0.0), 0.25);
    CHECK(up.perturbed[0] == doctest::Approx(0.75));
    // label above pred: gradient flips, move down
    auto down = mts_fgsm(m, scalar_window(0.5, 100.0), 0.25);
    CHECK(down.perturbed[0] == doctest::Approx(0.25));
    // zero gradient contributes nothing
    auto flat = mts_fgsm(m, scalar_window(0.0, 0.0), 0.25);
    CHECK(flat.perturbed[0] == 0.0);
    // achieved loss is (pred - y)^2 at the perturbed point
    CHECK(up.achieved_loss == doctest::Approx(std::pow(2.0 * 0.75, 2)));
}

TEST_CASE("epsilon zero returns the input bit for bit") {
    const RegressionModel m = testutil::make_model(Arch::GRU, {5}, 8, 3, 6);
    const auto windows = make_windows(40, 4, 8, 3);
    for (AttackKind k : {AttackKind::FGSM, AttackKind::BIM, AttackKind::PGD, AttackKind::PGD_R}) {
        AttackConfig cfg;
        cfg.kind = k;
        cfg.epsilon = 0.0;
        cfg.iterations = 5;
        cfg.restarts = 2;
        const auto adv = attack_dataset(m, windows, cfg);
        for (std::size_t i = 0; i < windows.size(); ++i) CHECK(adv[i].perturbed == windows[i].values);
    }
}

TEST_CASE("every kind respects the l-inf budget") {
    const RegressionModel m = testutil::make_model(Arch::LSTM, {6}, 10, 3, 7);
    const auto windows = make_windows(41, 6, 10, 3);
    for (AttackKind k : {AttackKind::FGSM, AttackKind::BIM, AttackKind::PGD, AttackKind::PGD_R}) {
        AttackConfig cfg;
        cfg.kind = k;
        cfg.epsilon = 0.3;
        cfg.iterations = 8;
        cfg.restarts = 3;
        cfg.seed = 5;
        const auto adv = attack_dataset(m, windows, cfg);
        for (std::size_t i = 0; i < windows.size(); ++i) {
            CHECK(linf(adv[i].perturbed, windows[i].values) <= 0.3 + 1e-12);
            CHECK(adv[i].perturbed.all_finite());
        }
    }
}

TEST_CASE("single-step bim with alpha = eps reproduces fgsm") {
    const RegressionModel m = testutil::make_model(Arch::GRU, {6}, 9, 2, 9);
    const auto windows = make_windows(42, 5, 9, 2);
    AttackConfig cfg;
    cfg.kind = AttackKind::BIM;
    cfg.epsilon = 0.2;
    cfg.alpha = 0.2;
    cfg.iterations = 1;
    for (const auto& w : windows) {
        const auto bim = mts_bim(m, w, cfg);
        const auto fgsm = mts_fgsm(m, w, 0.2);
        CHECK(bim.perturbed == fgsm.perturbed);
        CHECK(bim.achieved_loss == fgsm.achieved_loss);
    }
}

TEST_CASE("bim default step covers the ball and beats fgsm almost always") {
    const RegressionModel m = testutil::make_model(Arch::GRU, {8}, 12, 3, 31);
    const auto windows = make_windows(43, 20, 12, 3);
    AttackConfig cfg;
    cfg.kind = AttackKind::BIM;
    cfg.epsilon = 0.3;
    cfg.iterations = 10;
    CHECK(cfg.resolved_alpha() == doctest::Approx(0.03));
    int wins = 0;
    for (const auto& w : windows) {
        const double fl = mts_fgsm(m, w, 0.3).achieved_loss;
        const double bl = mts_bim(m, w, cfg).achieved_loss;
        if (bl >= fl - 1e-9) ++wins;
    }
    CHECK(wins >= 18);  // iterative refinement should rarely lose
}

TEST_CASE("pgd is seed-deterministic and restarts nest") {
    const RegressionModel m = testutil::make_model(Arch::LSTM, {6}, 10, 3, 13);
    const auto w = make_windows(44, 1, 10, 3)[0];
    AttackConfig cfg;
    cfg.kind = AttackKind::PGD;
    cfg.epsilon = 0.3;
    cfg.iterations = 6;
    cfg.seed = 77;
    CHECK(cfg.resolved_alpha() == doctest::Approx(0.1));  // 2*eps/iters for pgd

    const auto a = mts_pgd(m, w, cfg);
    const auto b = mts_pgd(m, w, cfg);
    CHECK(a.perturbed == b.perturbed);
    cfg.seed = 78;
    CHECK(!(mts_pgd(m, w, cfg).perturbed == a.perturbed));

    // one restart is exactly pgd; more restarts never lose loss
    cfg.seed = 77;
    cfg.kind = AttackKind::PGD_R;
    cfg.restarts = 1;
    const auto r1 = mts_pgd_r(m, w, cfg);
    CHECK(r1.perturbed == a.perturbed);
    for (int r : {2, 4, 8}) {
        cfg.restarts = r;
        CHECK(mts_pgd_r(m, w, cfg).achieved_loss >= r1.achieved_loss);
    }
    cfg.restarts = 4;
    const auto r4 = mts_pgd_r(m, w, cfg);
    cfg.restarts = 8;
    CHECK(mts_pgd_r(m, w, cfg).achieved_loss >= r4.achieved_loss);
}

TEST_CASE("attack_dataset draws an independent stream per window index") {
    const RegressionModel m = testutil::make_model(Arch::GRU, {5}, 8, 2, 17);
    const auto windows = make_windows(45, 6, 8, 2);
    AttackConfig cfg;
    cfg.kind = AttackKind::PGD;
    cfg.epsilon = 0.25;
    cfg.iterations = 4;
    cfg.seed = 3;
    const auto full = attack_dataset(m, windows, cfg);
    const auto prefix = attack_dataset(m, {windows.begin(), windows.begin() + 3}, cfg);
    for (int i = 0; i < 3; ++i) CHECK(prefix[i].perturbed == full[i].perturbed);
}

TEST_CASE("unit clamp keeps perturbations inside [0,1]") {
    const RegressionModel m = testutil::make_model(Arch::GRU, {5}, 8, 2, 19);
    const auto windows = make_windows(46, 4, 8, 2);  // values already in [0,1)
    AttackConfig cfg;
    cfg.kind = AttackKind::BIM;
    cfg.epsilon = 0.9;
    cfg.iterations = 5;
    cfg.clamp_unit = true;
    const auto adv = attack_dataset(m, windows, cfg);
    for (const auto& a : adv)
        for (double v : a.perturbed.values()) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
}

TEST_CASE("adversarial_rmse and as_windows agree with manual evaluation") {
    const RegressionModel m = testutil::make_model(Arch::GRU, {5}, 8, 2, 23);
    const auto windows = make_windows(47, 5, 8, 2);
    AttackConfig cfg;
    cfg.kind = AttackKind::FGSM;
    cfg.epsilon = 0.3;
    const auto adv = attack_dataset(m, windows, cfg);
    const auto advw = as_windows(adv);
    REQUIRE(advw.size() == windows.size());
    std::vector<double> labels;
    for (const auto& w : windows) labels.push_back(w.label);
    for (std::size_t i = 0; i < advw.size(); ++i) {
        CHECK(advw[i].label == windows[i].label);
        CHECK(advw[i].engine_id == windows[i].engine_id);
        CHECK(advw[i].values == adv[i].perturbed);
    }
    CHECK(adversarial_rmse(m, adv) == doctest::Approx(rmse(predict_rul(m, advw), labels)));
}

TEST_CASE("attack validation") {
    const RegressionModel m = testutil::make_model(Arch::GRU, {4}, 6, 2, 29);
    const auto w = make_windows(48, 1, 6, 2)[0];
    AttackConfig cfg;
    cfg.epsilon = -0.1;
    CHECK_THROWS_AS(mts_fgsm(m, w, -0.1), ConfigError);
    cfg.kind = AttackKind::BIM;
    cfg.epsilon = 0.3;
    cfg.iterations = 0;
    CHECK_THROWS_AS(mts_bim(m, w, cfg), ConfigError);
    cfg.kind = AttackKind::PGD_R;
    cfg.iterations = 3;
    cfg.restarts = 0;
    CHECK_THROWS_AS(mts_pgd_r(m, w, cfg), ConfigError);
}
