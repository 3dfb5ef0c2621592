#include <string>

#include "doctest.h"
#include "helpers.hpp"
#include "rulkit/errors.hpp"
#include "rulkit/harness.hpp"

using namespace rulkit;
using testutil::make_windows;

namespace {

const char* kFullConfig = R"({
  "run_dir": "/tmp/x",
  "seed": 5,
  "data": {"source": "synthetic", "synthetic_seed": 9, "noise_level": 0.2, "rul_cap": 120, "min_cycles": 140},
  "models": [
    {"name": "gru", "arch": "gru", "hidden": [16, 8], "seq_len": 40, "epochs": 3, "lr": 0.002,
     "batch_size": 32, "optimizer": "adam", "seed": 2, "train_stride": 4}
  ],
  "attacks": [{"kind": "fgsm", "epsilon": 0.3}, {"kind": "pgd_r", "epsilon": 0.3, "iterations": 7, "restarts": 3, "seed": 1}],
  "sweep": {"models": ["gru"], "kinds": ["fgsm", "bim"], "epsilons": [0, 0.1], "iterations": 5, "restarts": 2, "seed": 3},
  "defense": {"modes": ["plain", "approximate"], "models": ["gru"], "train_windows": 24,
              "attacks": [{"kind": "fgsm", "epsilon": 0.3}], "epochs_plain": 2, "epochs_approx": 4,
              "batch_size": 16, "lr": 0.001, "weight_groups": 8, "index_basis": false, "optimizer": "adam", "seed": 6},
  "transfer": {"models": ["gru"], "attacks": [{"kind": "bim", "epsilon": 0.2, "iterations": 4}]}
})";

std::string replace_once(std::string s, const std::string& from, const std::string& to) {
    s.replace(s.find(from), from.size(), to);
    return s;
}

}  // namespace

TEST_CASE("a full config parses into the right fields") {
    const RunConfig cfg = parse_config_text(kFullConfig);
    CHECK(cfg.run_dir == "/tmp/x");
    CHECK(cfg.seed == 5);
    CHECK(cfg.data_source == "synthetic");
    CHECK(cfg.synth_seed == 9);
    CHECK(cfg.synth_noise == doctest::Approx(0.2));
    CHECK(cfg.rul_cap == doctest::Approx(120));
    CHECK(cfg.min_cycles == 140);
    REQUIRE(cfg.models.size() == 1);
    CHECK(cfg.models[0].name == "gru");
    CHECK(cfg.models[0].spec.arch == Arch::GRU);
    CHECK(cfg.models[0].spec.hidden == std::vector<int>{16, 8});
    CHECK(cfg.models[0].train_stride == 4);
    REQUIRE(cfg.attacks.size() == 2);
    CHECK(cfg.attacks[1].kind == AttackKind::PGD_R);
    CHECK(cfg.attacks[1].restarts == 3);
    CHECK(cfg.sweep.kinds.size() == 2);
    CHECK(cfg.sweep.epsilons == std::vector<double>{0.0, 0.1});
    CHECK(cfg.defense.modes.size() == 2);
    CHECK(cfg.defense.train_windows == 24);
    CHECK(cfg.transfer.attacks.size() == 1);
    CHECK(cfg.model_entry("gru").name == "gru");
    CHECK_THROWS_AS(cfg.model_entry("lstm"), ConfigError);
}

TEST_CASE("unknown keys anywhere are rejected") {
    CHECK_THROWS_AS(parse_config_text(R"({"bogus": 1})"), ConfigError);
    CHECK_THROWS_AS(parse_config_text(replace_once(kFullConfig, "\"source\"", "\"sorce\"")), ConfigError);
    CHECK_THROWS_AS(parse_config_text(replace_once(kFullConfig, "\"arch\"", "\"architecture\"")), ConfigError);
    CHECK_THROWS_AS(parse_config_text(replace_once(kFullConfig, "\"epsilon\": 0.3}", "\"eps\": 0.3}")), ConfigError);
    CHECK_THROWS_AS(parse_config_text(replace_once(kFullConfig, "\"iterations\": 5", "\"iters\": 5")), ConfigError);
    CHECK_THROWS_AS(parse_config_text(replace_once(kFullConfig, "\"train_windows\"", "\"trainwindows\"")),
                    ConfigError);
}

TEST_CASE("config validation errors") {
    CHECK_THROWS_AS(parse_config_text("not json"), ConfigError);
    CHECK_THROWS_AS(parse_config_text(R"({"data": {"source": "csv"}})"), ConfigError);
    CHECK_THROWS_AS(parse_config_text(R"({"data": {"source": "dir"}})"), ConfigError);
    // model entries need name+arch+hidden, valid names, unique names
    CHECK_THROWS_AS(parse_config_text(R"({"models": [{"arch": "gru", "hidden": [4]}]})"), ConfigError);
    CHECK_THROWS_AS(parse_config_text(R"({"models": [{"name": "a", "arch": "gru"}]})"), ConfigError);
    CHECK_THROWS_AS(parse_config_text(R"({"models": [{"name": "a/b", "arch": "gru", "hidden": [4]}]})"),
                    ConfigError);
    CHECK_THROWS_AS(
        parse_config_text(
            R"({"models": [{"name": "a", "arch": "gru", "hidden": [4]}, {"name": "a", "arch": "cnn", "hidden": [4]}]})"),
        ConfigError);
    // wrong types
    CHECK_THROWS_AS(parse_config_text(R"({"seed": "five"})"), ConfigError);
    CHECK_THROWS_AS(parse_config_text(R"({"models": [{"name": "a", "arch": "gru", "hidden": 4}]})"), ConfigError);
    // sections may only reference declared models
    CHECK_THROWS_AS(parse_config_text(R"({"sweep": {"models": ["ghost"], "kinds": ["fgsm"], "epsilons": [0.1]}})"),
                    ConfigError);
    CHECK_THROWS_AS(parse_config_text(R"({"transfer": {"models": ["ghost"]}})"), ConfigError);
    // bad enum values
    CHECK_THROWS_AS(parse_config_text(R"({"attacks": [{"kind": "deepfool"}]})"), ConfigError);
    CHECK_THROWS_AS(parse_config_text(R"({"defense": {"modes": ["fancy"]}})"), ConfigError);
}

TEST_CASE("format_double is compact and round-trips") {
    CHECK(format_double(0.3) == "0.3");
    CHECK(format_double(0.0) == "0");
    CHECK(format_double(130.0) == "130");
    CHECK(format_double(-2.5) == "-2.5");
    const double v = 0.1234567890123456;
    CHECK(std::stod(format_double(v)) == v);
}

TEST_CASE("eval_attack_impact reports clean rmse and multipliers") {
    const RegressionModel m = testutil::make_model(Arch::GRU, {5}, 8, 2, 3);
    const auto windows = make_windows(60, 6, 8, 2);
    std::vector<AttackConfig> attacks(2);
    attacks[0].kind = AttackKind::FGSM;
    attacks[0].epsilon = 0.0;
    attacks[1].kind = AttackKind::FGSM;
    attacks[1].epsilon = 0.4;
    const AttackImpact imp = eval_attack_impact(m, windows, attacks);
    REQUIRE(imp.rows.size() == 2);
    CHECK(imp.rows[0].rmse == doctest::Approx(imp.clean_rmse));
    CHECK(imp.rows[0].multiplier == doctest::Approx(1.0));
    CHECK(imp.rows[1].rmse >= imp.rows[0].rmse);
}

TEST_CASE("epsilon_sweep starts at the clean error for eps zero") {
    const RegressionModel m = testutil::make_model(Arch::GRU, {5}, 8, 2, 4);
    const auto windows = make_windows(61, 5, 8, 2);
    AttackConfig proto;
    proto.iterations = 4;
    proto.restarts = 2;
    proto.seed = 9;
    const SweepResult res =
        epsilon_sweep(m, windows, {AttackKind::FGSM, AttackKind::PGD}, {0.0, 0.2}, proto);
    REQUIRE(res.curves.size() == 2);
    for (const auto& c : res.curves) {
        REQUIRE(c.rmse.size() == 2);
        CHECK(c.rmse[0] == doctest::Approx(res.clean_rmse));
    }
    CHECK_THROWS_AS(epsilon_sweep(m, windows, {}, {0.1}, proto), ConfigError);
    CHECK_THROWS_AS(epsilon_sweep(m, windows, {AttackKind::FGSM}, {}, proto), ConfigError);
}

TEST_CASE("transferability covers the grid and validates inputs") {
    const RegressionModel a = testutil::make_model(Arch::GRU, {5}, 10, 2, 5);
    const RegressionModel b = testutil::make_model(Arch::LSTM, {4}, 8, 2, 6);

    SensorData traces;
    traces.n_features = 2;
    Rng rng(62);
    std::vector<double> rul;
    for (int id = 1; id <= 3; ++id) {
        dvec v;
        for (int i = 0; i < 30 * 2; ++i) v.push_back(rng.uniform());
        EngineTrace e;
        e.id = id;
        e.sensors = Tensor({30, 2}, std::move(v));
        traces.engines.push_back(std::move(e));
        rul.push_back(20.0 + id);
    }

    std::vector<AttackConfig> attacks(1);
    attacks[0].kind = AttackKind::FGSM;
    attacks[0].epsilon = 0.3;
    const TransferMatrix tm = transferability({&a, &b}, {"a", "b"}, traces, rul, 130.0, attacks);
    REQUIRE(tm.rmse.size() == 2);
    REQUIRE(tm.rmse[0].size() == 2);
    CHECK(tm.target_clean.size() == 2);
    // diagonal equals the white-box adversarial error
    const auto wa = final_windows(traces, rul, 130.0, a.spec.seq_len);
    const auto adv = attack_dataset(a, wa, attacks[0]);
    CHECK(tm.rmse[0][0][0] == doctest::Approx(adversarial_rmse(a, adv)));

    const RegressionModel wide = testutil::make_model(Arch::GRU, {5}, 10, 3, 7);
    CHECK_THROWS_AS(transferability({&a, &wide}, {"a", "wide"}, traces, rul, 130.0, attacks), ConfigError);
    CHECK_THROWS_AS(transferability({&a}, {"a"}, traces, {1.0}, 130.0, attacks), ConfigError);
    CHECK_THROWS_AS(transferability({}, {}, traces, rul, 130.0, attacks), ConfigError);
}

TEST_CASE("defense_report recomputes alpha and beta consistently") {
    const RegressionModel base = testutil::make_model(Arch::GRU, {5}, 8, 2, 8);
    RegressionModel defended = base;  // stand-in: any model evaluated on the same examples
    defended.net.params.get("head.b")[0] += 0.5;
    const auto windows = make_windows(63, 5, 8, 2);
    std::vector<AttackConfig> attacks(1);
    attacks[0].kind = AttackKind::FGSM;
    attacks[0].epsilon = 0.3;

    DefenseEvalInput inp;
    inp.name = "gru";
    inp.base = &base;
    inp.plain = &defended;
    const auto rows = defense_report({inp}, windows, attacks);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].model == "gru");
    CHECK(rows[0].alpha == doctest::Approx(rows[0].e_att - rows[0].e));
    REQUIRE(rows[0].beta_plain.has_value());
    CHECK(*rows[0].beta_plain == doctest::Approx(*rows[0].e_def_plain - rows[0].e));
    CHECK(!rows[0].e_def_approx.has_value());

    DefenseEvalInput missing;
    missing.name = "x";
    CHECK_THROWS_AS(defense_report({missing}, windows, attacks), ConfigError);
}
