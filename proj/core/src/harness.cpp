#include "rulkit/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string_view>

#include "json.hpp"
#include "rulkit/container.hpp"
#include "rulkit/errors.hpp"
#include "rulkit/rng.hpp"
#include "rulkit/synth.hpp"
#include "rulkit/version.hpp"

namespace rulkit {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw RuntimeError("format_double: value does not fit");
    return std::string(buf, ptr);
}

// ----------------------------------------------------------------- metrics

AttackImpact eval_attack_impact(const RegressionModel& model, const std::vector<TimeWindow>& windows,
                                const std::vector<AttackConfig>& attacks) {
    AttackImpact out;
    out.clean_rmse = eval_rmse(model, windows);
    for (const AttackConfig& cfg : attacks) {
        const auto adv = attack_dataset(model, windows, cfg);
        AttackImpact::Row row;
        row.cfg = cfg;
        row.rmse = adversarial_rmse(model, adv);
        row.multiplier = out.clean_rmse > 0.0 ? row.rmse / out.clean_rmse : 0.0;
        out.rows.push_back(row);
    }
    return out;
}

TransferMatrix transferability(const std::vector<const RegressionModel*>& models,
                               const std::vector<std::string>& names, const SensorData& traces,
                               const std::vector<double>& final_rul, double rul_cap,
                               const std::vector<AttackConfig>& attacks) {
    if (models.empty()) throw ConfigError("transfer: need at least one model");
    if (models.size() != names.size()) throw ConfigError("transfer: one name per model required");
    if (final_rul.size() != traces.engines.size())
        throw ConfigError("transfer: final_rul size does not match engine count");

    const std::size_t n = models.size();
    int max_T = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (models[i]->spec.input_dim != traces.n_features)
            throw ConfigError("transfer: model " + names[i] + " expects " +
                              std::to_string(models[i]->spec.input_dim) + " features, traces have " +
                              std::to_string(traces.n_features));
        max_T = std::max(max_T, models[i]->spec.seq_len);
    }
    for (const EngineTrace& e : traces.engines)
        if (e.sensors.shape()[0] < static_cast<std::int64_t>(max_T))
            throw ConfigError("transfer: engine " + std::to_string(e.id) +
                              " is shorter than the longest model window (" + std::to_string(max_T) + ")");

    TransferMatrix tm;
    tm.models = names;
    tm.attacks = attacks;
    std::vector<std::vector<TimeWindow>> tgt_windows(n);
    for (std::size_t t = 0; t < n; ++t) {
        tgt_windows[t] = final_windows(traces, final_rul, rul_cap, models[t]->spec.seq_len);
        tm.target_clean.push_back(eval_rmse(*models[t], tgt_windows[t]));
    }
    tm.rmse.assign(n, std::vector<std::vector<double>>(n, std::vector<double>(attacks.size(), 0.0)));

    const int F = traces.n_features;
    for (std::size_t s = 0; s < n; ++s) {
        const int Ts = models[s]->spec.seq_len;
        for (std::size_t ai = 0; ai < attacks.size(); ++ai) {
            const auto adv = attack_dataset(*models[s], tgt_windows[s], attacks[ai]);
            for (std::size_t t = 0; t < n; ++t) {
                const int Tt = models[t]->spec.seq_len;
                // Splice the perturbed rows into the trace tail, then take the
                // last Tt rows: rows [L-min(Ts,Tt), L) come from the attack.
                const int overlap = std::min(Ts, Tt);
                std::vector<TimeWindow> spliced = tgt_windows[t];
                for (std::size_t i = 0; i < spliced.size(); ++i) {
                    for (int r = 0; r < overlap; ++r) {
                        const double* src = adv[i].perturbed.data() + static_cast<std::size_t>(Ts - overlap + r) * F;
                        double* dst = spliced[i].values.data() + static_cast<std::size_t>(Tt - overlap + r) * F;
                        std::copy(src, src + F, dst);
                    }
                }
                tm.rmse[s][t][ai] = eval_rmse(*models[t], spliced);
            }
        }
    }
    return tm;
}

SweepResult epsilon_sweep(const RegressionModel& model, const std::vector<TimeWindow>& windows,
                          const std::vector<AttackKind>& kinds, const std::vector<double>& epsilons,
                          const AttackConfig& cfg_proto) {
    if (kinds.empty()) throw ConfigError("sweep: need at least one attack kind");
    if (epsilons.empty()) throw ConfigError("sweep: need at least one epsilon");
    SweepResult out;
    out.epsilons = epsilons;
    out.clean_rmse = eval_rmse(model, windows);
    for (std::size_t ki = 0; ki < kinds.size(); ++ki) {
        SweepCurve curve;
        curve.kind = kinds[ki];
        for (std::size_t ei = 0; ei < epsilons.size(); ++ei) {
            AttackConfig cfg = cfg_proto;
            cfg.kind = kinds[ki];
            cfg.epsilon = epsilons[ei];
            cfg.seed = mix_seed(cfg_proto.seed, ki * 1009 + ei);
            const auto adv = attack_dataset(model, windows, cfg);
            curve.rmse.push_back(adversarial_rmse(model, adv));
        }
        out.curves.push_back(std::move(curve));
    }
    return out;
}

std::vector<DefenseReportRow> defense_report(const std::vector<DefenseEvalInput>& inputs,
                                             const std::vector<TimeWindow>& eval_windows,
                                             const std::vector<AttackConfig>& attacks) {
    std::vector<DefenseReportRow> rows;
    for (const DefenseEvalInput& inp : inputs) {
        if (!inp.base) throw ConfigError("defense report: base model missing for " + inp.name);
        const double e = eval_rmse(*inp.base, eval_windows);
        std::optional<double> plain_clean, approx_clean;
        if (inp.plain) plain_clean = eval_rmse(*inp.plain, eval_windows);
        if (inp.approx) approx_clean = eval_rmse(*inp.approx, eval_windows);
        for (const AttackConfig& cfg : attacks) {
            const auto adv = attack_dataset(*inp.base, eval_windows, cfg);
            const auto advw = as_windows(adv);
            DefenseReportRow row;
            row.model = inp.name;
            row.attack = to_string(cfg.kind);
            row.eps = cfg.epsilon;
            row.e = e;
            row.e_att = adversarial_rmse(*inp.base, adv);
            row.alpha = row.e_att - e;
            row.e_def_plain_clean = plain_clean;
            row.e_def_approx_clean = approx_clean;
            if (inp.plain) {
                row.e_def_plain = eval_rmse(*inp.plain, advw);
                row.beta_plain = *row.e_def_plain - e;
            }
            if (inp.approx) {
                row.e_def_approx = eval_rmse(*inp.approx, advw);
                row.beta_approx = *row.e_def_approx - e;
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

// ----------------------------------------------------------------- config

namespace {

void check_keys(const ojson& o, const std::string& ctx, std::initializer_list<std::string_view> allowed) {
    for (const auto& item : o.items()) {
        bool ok = false;
        for (std::string_view k : allowed)
            if (item.key() == k) {
                ok = true;
                break;
            }
        if (!ok) throw ConfigError("config: unknown key '" + item.key() + "' in " + ctx);
    }
}

const ojson& as_object(const ojson& j, const std::string& ctx) {
    if (!j.is_object()) throw ConfigError("config: " + ctx + " must be an object");
    return j;
}

template <class T>
T field_as(const ojson& o, const std::string& ctx, const char* key) {
    try {
        return o.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("config: " + ctx + "." + key + " has the wrong type");
    }
}

template <class T>
T field_or(const ojson& o, const std::string& ctx, const char* key, T def) {
    if (!o.contains(key)) return def;
    return field_as<T>(o, ctx, key);
}

template <class T>
T field_req(const ojson& o, const std::string& ctx, const char* key) {
    if (!o.contains(key)) throw ConfigError("config: " + ctx + "." + key + " is required");
    return field_as<T>(o, ctx, key);
}

AttackConfig parse_attack(const ojson& j, const std::string& ctx) {
    as_object(j, ctx);
    check_keys(j, ctx, {"kind", "epsilon", "alpha", "iterations", "restarts", "seed", "clamp_unit"});
    AttackConfig c;
    c.kind = attack_kind_from_string(field_req<std::string>(j, ctx, "kind"));
    c.epsilon = field_or<double>(j, ctx, "epsilon", c.epsilon);
    c.alpha = field_or<double>(j, ctx, "alpha", c.alpha);
    c.iterations = field_or<int>(j, ctx, "iterations", c.iterations);
    c.restarts = field_or<int>(j, ctx, "restarts", c.restarts);
    c.seed = field_or<std::uint64_t>(j, ctx, "seed", c.seed);
    c.clamp_unit = field_or<bool>(j, ctx, "clamp_unit", c.clamp_unit);
    return c;
}

std::vector<AttackConfig> parse_attack_list(const ojson& j, const std::string& ctx) {
    if (!j.is_array()) throw ConfigError("config: " + ctx + " must be an array");
    std::vector<AttackConfig> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(parse_attack(j[i], ctx + "[" + std::to_string(i) + "]"));
    return out;
}

void validate_name(const std::string& name) {
    if (name.empty()) throw ConfigError("config: model name must not be empty");
    for (char ch : name)
        if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-'))
            throw ConfigError("config: model name '" + name + "' may only use letters, digits, '_' and '-'");
}

ModelEntry parse_model(const ojson& j, const std::string& ctx) {
    as_object(j, ctx);
    check_keys(j, ctx,
               {"name", "arch", "hidden", "seq_len", "batch_size", "epochs", "lr", "optimizer", "seed",
                "train_stride", "label_scale"});
    ModelEntry e;
    e.name = field_req<std::string>(j, ctx, "name");
    validate_name(e.name);
    e.spec.arch = arch_from_string(field_req<std::string>(j, ctx, "arch"));
    e.spec.hidden = field_req<std::vector<int>>(j, ctx, "hidden");
    if (e.spec.hidden.empty()) throw ConfigError("config: " + ctx + ".hidden must not be empty");
    e.spec.seq_len = field_or<int>(j, ctx, "seq_len", e.spec.seq_len);
    e.spec.batch_size = field_or<int>(j, ctx, "batch_size", e.spec.batch_size);
    e.spec.epochs = field_or<int>(j, ctx, "epochs", e.spec.epochs);
    e.spec.lr = field_or<double>(j, ctx, "lr", e.spec.lr);
    e.spec.optimizer = field_or<std::string>(j, ctx, "optimizer", e.spec.optimizer);
    e.spec.seed = field_or<std::uint64_t>(j, ctx, "seed", e.spec.seed);
    e.train_stride = field_or<int>(j, ctx, "train_stride", e.train_stride);
    if (e.train_stride < 1) throw ConfigError("config: " + ctx + ".train_stride must be >= 1");
    e.label_scale = field_or<double>(j, ctx, "label_scale", e.label_scale);
    if (e.label_scale < 0) throw ConfigError("config: " + ctx + ".label_scale must be >= 0 (0 = use the RUL cap)");
    return e;
}

std::vector<std::string> parse_name_list(const ojson& j, const std::string& ctx) {
    std::vector<std::string> out;
    if (!j.is_array()) throw ConfigError("config: " + ctx + " must be an array of names");
    for (const auto& v : j) {
        if (!v.is_string()) throw ConfigError("config: " + ctx + " must be an array of names");
        out.push_back(v.get<std::string>());
    }
    return out;
}

}  // namespace

const ModelEntry& RunConfig::model_entry(const std::string& name) const {
    for (const ModelEntry& e : models)
        if (e.name == name) return e;
    throw ConfigError("config: no model named '" + name + "'");
}

RunConfig parse_config_text(const std::string& json_text) {
    ojson j;
    try {
        j = ojson::parse(json_text);
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError(std::string("config: not valid JSON: ") + ex.what());
    }
    as_object(j, "top level");
    check_keys(j, "top level", {"run_dir", "seed", "data", "models", "attacks", "sweep", "defense", "transfer"});

    RunConfig cfg;
    cfg.run_dir = field_or<std::string>(j, "top level", "run_dir", "");
    cfg.seed = field_or<std::uint64_t>(j, "top level", "seed", cfg.seed);

    if (j.contains("data")) {
        const ojson& d = as_object(j.at("data"), "data");
        check_keys(d, "data", {"source", "dir", "rul_cap", "min_cycles", "synthetic_seed", "noise_level"});
        cfg.data_source = field_or<std::string>(d, "data", "source", cfg.data_source);
        if (cfg.data_source != "synthetic" && cfg.data_source != "dir")
            throw ConfigError("config: data.source must be 'synthetic' or 'dir'");
        cfg.data_dir = field_or<std::string>(d, "data", "dir", "");
        if (cfg.data_source == "dir" && cfg.data_dir.empty())
            throw ConfigError("config: data.dir is required when data.source is 'dir'");
        cfg.rul_cap = field_or<double>(d, "data", "rul_cap", cfg.rul_cap);
        cfg.min_cycles = field_or<int>(d, "data", "min_cycles", cfg.min_cycles);
        cfg.synth_seed = field_or<std::uint64_t>(d, "data", "synthetic_seed", cfg.synth_seed);
        cfg.synth_noise = field_or<double>(d, "data", "noise_level", cfg.synth_noise);
    }

    if (j.contains("models")) {
        const ojson& m = j.at("models");
        if (!m.is_array()) throw ConfigError("config: models must be an array");
        for (std::size_t i = 0; i < m.size(); ++i)
            cfg.models.push_back(parse_model(m[i], "models[" + std::to_string(i) + "]"));
        for (std::size_t a = 0; a < cfg.models.size(); ++a)
            for (std::size_t b = a + 1; b < cfg.models.size(); ++b)
                if (cfg.models[a].name == cfg.models[b].name)
                    throw ConfigError("config: duplicate model name '" + cfg.models[a].name + "'");
    }

    if (j.contains("attacks")) cfg.attacks = parse_attack_list(j.at("attacks"), "attacks");

    if (j.contains("sweep")) {
        const ojson& s = as_object(j.at("sweep"), "sweep");
        check_keys(s, "sweep", {"models", "kinds", "epsilons", "iterations", "restarts", "alpha", "seed"});
        if (s.contains("models")) cfg.sweep.models = parse_name_list(s.at("models"), "sweep.models");
        if (s.contains("kinds"))
            for (const std::string& k : parse_name_list(s.at("kinds"), "sweep.kinds"))
                cfg.sweep.kinds.push_back(attack_kind_from_string(k));
        cfg.sweep.epsilons = field_or<std::vector<double>>(s, "sweep", "epsilons", {});
        cfg.sweep.iterations = field_or<int>(s, "sweep", "iterations", cfg.sweep.iterations);
        cfg.sweep.restarts = field_or<int>(s, "sweep", "restarts", cfg.sweep.restarts);
        cfg.sweep.alpha = field_or<double>(s, "sweep", "alpha", cfg.sweep.alpha);
        cfg.sweep.seed = field_or<std::uint64_t>(s, "sweep", "seed", cfg.sweep.seed);
    }

    if (j.contains("defense")) {
        const ojson& d = as_object(j.at("defense"), "defense");
        check_keys(d, "defense",
                   {"modes", "models", "train_windows", "attacks", "epochs_plain", "epochs_approx", "batch_size",
                    "lr", "weight_groups", "index_basis", "optimizer", "seed"});
        if (d.contains("modes"))
            for (const std::string& m : parse_name_list(d.at("modes"), "defense.modes"))
                cfg.defense.modes.push_back(defense_mode_from_string(m));
        if (d.contains("models")) cfg.defense.models = parse_name_list(d.at("models"), "defense.models");
        cfg.defense.train_windows = field_or<int>(d, "defense", "train_windows", cfg.defense.train_windows);
        if (d.contains("attacks")) cfg.defense.attack_list = parse_attack_list(d.at("attacks"), "defense.attacks");
        cfg.defense.epochs_plain = field_or<int>(d, "defense", "epochs_plain", cfg.defense.epochs_plain);
        cfg.defense.epochs_approx = field_or<int>(d, "defense", "epochs_approx", cfg.defense.epochs_approx);
        cfg.defense.batch_size = field_or<int>(d, "defense", "batch_size", cfg.defense.batch_size);
        cfg.defense.lr = field_or<double>(d, "defense", "lr", cfg.defense.lr);
        cfg.defense.weight_groups = field_or<int>(d, "defense", "weight_groups", cfg.defense.weight_groups);
        cfg.defense.index_basis = field_or<bool>(d, "defense", "index_basis", cfg.defense.index_basis);
        cfg.defense.optimizer = field_or<std::string>(d, "defense", "optimizer", cfg.defense.optimizer);
        cfg.defense.seed = field_or<std::uint64_t>(d, "defense", "seed", cfg.defense.seed);
    }

    if (j.contains("transfer")) {
        const ojson& t = as_object(j.at("transfer"), "transfer");
        check_keys(t, "transfer", {"models", "attacks"});
        if (t.contains("models")) cfg.transfer.models = parse_name_list(t.at("models"), "transfer.models");
        if (t.contains("attacks")) cfg.transfer.attacks = parse_attack_list(t.at("attacks"), "transfer.attacks");
    }

    for (const std::string& name : cfg.sweep.models) cfg.model_entry(name);
    for (const std::string& name : cfg.defense.models) cfg.model_entry(name);
    for (const std::string& name : cfg.transfer.models) cfg.model_entry(name);
    if (!cfg.defense.modes.empty() && cfg.defense.attack_list.empty())
        throw ConfigError("defense.attacks must be non-empty when defense.modes is set");
    return cfg;
}

RunConfig parse_config(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot open config file " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

// ----------------------------------------------------------------- stages

namespace {

void note(const StageOptions& opt, const std::string& msg) {
    if (opt.quiet) return;
    std::fputs((msg + "\n").c_str(), stdout);
    std::fflush(stdout);
}

ojson attack_to_json(const AttackConfig& c) {
    ojson j;
    j["kind"] = to_string(c.kind);
    j["epsilon"] = c.epsilon;
    j["alpha"] = c.alpha;
    j["iterations"] = c.iterations;
    j["restarts"] = c.restarts;
    j["seed"] = c.seed;
    j["clamp_unit"] = c.clamp_unit;
    return j;
}

ojson config_to_json(const RunConfig& cfg) {
    ojson j;
    j["seed"] = cfg.seed;
    ojson d;
    d["source"] = cfg.data_source;
    if (!cfg.data_dir.empty()) d["dir"] = cfg.data_dir.generic_string();
    d["rul_cap"] = cfg.rul_cap;
    d["min_cycles"] = cfg.min_cycles;
    d["synthetic_seed"] = cfg.synth_seed;
    d["noise_level"] = cfg.synth_noise;
    j["data"] = d;
    ojson models = ojson::array();
    for (const ModelEntry& e : cfg.models) {
        ojson m;
        m["name"] = e.name;
        m["arch"] = to_string(e.spec.arch);
        m["hidden"] = e.spec.hidden;
        m["seq_len"] = e.spec.seq_len;
        m["batch_size"] = e.spec.batch_size;
        m["epochs"] = e.spec.epochs;
        m["lr"] = e.spec.lr;
        m["optimizer"] = e.spec.optimizer;
        m["seed"] = e.spec.seed;
        m["train_stride"] = e.train_stride;
        m["label_scale"] = e.label_scale;
        models.push_back(m);
    }
    j["models"] = models;
    ojson attacks = ojson::array();
    for (const AttackConfig& a : cfg.attacks) attacks.push_back(attack_to_json(a));
    j["attacks"] = attacks;
    ojson s;
    s["models"] = cfg.sweep.models;
    ojson kinds = ojson::array();
    for (AttackKind k : cfg.sweep.kinds) kinds.push_back(to_string(k));
    s["kinds"] = kinds;
    s["epsilons"] = cfg.sweep.epsilons;
    s["iterations"] = cfg.sweep.iterations;
    s["restarts"] = cfg.sweep.restarts;
    s["alpha"] = cfg.sweep.alpha;
    s["seed"] = cfg.sweep.seed;
    j["sweep"] = s;
    ojson df;
    ojson modes = ojson::array();
    for (DefenseMode m : cfg.defense.modes) modes.push_back(to_string(m));
    df["modes"] = modes;
    df["models"] = cfg.defense.models;
    df["train_windows"] = cfg.defense.train_windows;
    ojson dfa = ojson::array();
    for (const AttackConfig& a : cfg.defense.attack_list) dfa.push_back(attack_to_json(a));
    df["attacks"] = dfa;
    df["epochs_plain"] = cfg.defense.epochs_plain;
    df["epochs_approx"] = cfg.defense.epochs_approx;
    df["batch_size"] = cfg.defense.batch_size;
    df["lr"] = cfg.defense.lr;
    df["weight_groups"] = cfg.defense.weight_groups;
    df["index_basis"] = cfg.defense.index_basis;
    df["optimizer"] = cfg.defense.optimizer;
    df["seed"] = cfg.defense.seed;
    j["defense"] = df;
    ojson tr;
    tr["models"] = cfg.transfer.models;
    ojson tra = ojson::array();
    for (const AttackConfig& a : cfg.transfer.attacks) tra.push_back(attack_to_json(a));
    tr["attacks"] = tra;
    j["transfer"] = tr;
    return j;
}

std::string config_checksum(const RunConfig& cfg) {
    const std::string dump = config_to_json(cfg).dump();
    return hex64(fnv1a64(std::as_bytes(std::span(dump.data(), dump.size()))));
}

ojson load_manifest(const RunConfig& cfg, const std::string& cfg_sum) {
    const fs::path p = cfg.run_dir / "manifest.json";
    if (fs::exists(p)) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        ojson m = ojson::parse(ss.str(), nullptr, false);
        if (m.is_object() && m.value("config_checksum", "") == cfg_sum) return m;
    }
    ojson m;
    m["tool"] = "rulkit";
    m["version"] = kVersion;
    m["schema_version"] = kReportSchemaVersion;
    m["config_checksum"] = cfg_sum;
    m["config"] = config_to_json(cfg);
    m["inputs"] = ojson::object();
    m["stages"] = ojson::object();
    return m;
}

void save_manifest(const RunConfig& cfg, const ojson& m) {
    std::ofstream out(cfg.run_dir / "manifest.json", std::ios::binary);
    if (!out) throw IoError("cannot write manifest.json in " + cfg.run_dir.string());
    out << m.dump(2) << "\n";
}

bool stage_done(const ojson& m, const std::string& stage, const fs::path& run_dir) {
    if (!m.contains("stages") || !m.at("stages").contains(stage)) return false;
    const ojson& s = m.at("stages").at(stage);
    if (!s.value("complete", false)) return false;
    if (s.contains("outputs"))
        for (const auto& item : s.at("outputs").items())
            if (!fs::exists(run_dir / item.key())) return false;
    return true;
}

void mark_stage(ojson& m, const std::string& stage, const fs::path& run_dir,
                const std::vector<std::string>& outputs) {
    ojson outs = ojson::object();
    for (const std::string& rel : outputs) outs[rel] = hex64(fnv1a64_file(run_dir / rel));
    ojson s;
    s["complete"] = true;
    s["outputs"] = outs;
    m["stages"][stage] = s;
}

void require_run_dir(const RunConfig& cfg) {
    if (cfg.run_dir.empty()) throw ConfigError("config: run_dir is required (set it in the config or via --run-dir)");
    fs::create_directories(cfg.run_dir);
}

Dataset require_dataset(const RunConfig& cfg) {
    const fs::path p = cfg.run_dir / "dataset.rkc";
    if (!fs::exists(p)) throw RuntimeError("missing " + p.string() + "; run the prep stage first");
    return load_dataset(p);
}

RegressionModel require_model(const RunConfig& cfg, const std::string& name) {
    const fs::path p = cfg.run_dir / "models" / (name + ".rkc");
    if (!fs::exists(p)) throw RuntimeError("missing " + p.string() + "; run the train stage first");
    return load_model(p);
}

struct EvalSet {
    SensorData traces;
    std::vector<double> rul;
};

EvalSet eval_subset(const Dataset& ds, int min_cycles) {
    EvalSet s;
    s.traces.n_features = ds.test.n_features;
    for (std::size_t i : indices_min_cycles(ds.test, min_cycles)) {
        s.traces.engines.push_back(ds.test.engines[i]);
        s.rul.push_back(ds.test_final_rul[i]);
    }
    if (s.traces.engines.empty())
        throw RuntimeError("evaluation subset is empty: no test engine has >= " + std::to_string(min_cycles) +
                           " cycles");
    return s;
}

std::string attack_slug(const AttackConfig& c) { return to_string(c.kind) + "_eps" + format_double(c.epsilon); }

void write_text(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot write " + p.string());
    out << text;
}

std::string csv_cell(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

// Stored adversarial windows for one (model, attack) pair.
void save_attack_set(const fs::path& p, const std::string& model_name, const AttackConfig& cfg,
                     const std::vector<AdversarialWindow>& adv) {
    if (adv.empty()) throw RuntimeError("attack produced no windows");
    const auto& shape = adv[0].perturbed.shape();
    const std::int64_t T = shape[0], F = shape[1];
    const std::int64_t n = static_cast<std::int64_t>(adv.size());
    dvec pert(static_cast<std::size_t>(n * T * F));
    dvec labels(adv.size()), loss(adv.size()), ids(adv.size()), ends(adv.size());
    for (std::size_t i = 0; i < adv.size(); ++i) {
        std::copy(adv[i].perturbed.values().begin(), adv[i].perturbed.values().end(),
                  pert.begin() + static_cast<std::ptrdiff_t>(i * static_cast<std::size_t>(T * F)));
        labels[i] = adv[i].original.label;
        loss[i] = adv[i].achieved_loss;
        ids[i] = adv[i].original.engine_id;
        ends[i] = adv[i].original.end_cycle;
    }
    ojson meta;
    meta["schema"] = "attack_set";
    meta["model"] = model_name;
    meta["attack"] = attack_to_json(cfg);
    Container c;
    c.meta = meta.dump();
    c.arrays.emplace_back("perturbed", Tensor({n, T, F}, std::move(pert)));
    c.arrays.emplace_back("labels", Tensor({n}, std::move(labels)));
    c.arrays.emplace_back("achieved_loss", Tensor({n}, std::move(loss)));
    c.arrays.emplace_back("engine_id", Tensor({n}, std::move(ids)));
    c.arrays.emplace_back("end_cycle", Tensor({n}, std::move(ends)));
    fs::create_directories(p.parent_path());
    save_container(p, c);
}

std::vector<TimeWindow> load_attack_set(const fs::path& p, int expect_T, int expect_F) {
    const Container c = load_container(p);
    const Tensor& pert = c.array("perturbed");
    const Tensor& labels = c.array("labels");
    const Tensor& ids = c.array("engine_id");
    const Tensor& ends = c.array("end_cycle");
    if (pert.shape().size() != 3) throw RuntimeError(p.string() + ": perturbed array must be rank 3");
    const std::int64_t n = pert.shape()[0], T = pert.shape()[1], F = pert.shape()[2];
    if (T != expect_T || F != expect_F)
        throw RuntimeError(p.string() + ": stored windows are " + std::to_string(T) + "x" + std::to_string(F) +
                           ", model expects " + std::to_string(expect_T) + "x" + std::to_string(expect_F));
    std::vector<TimeWindow> out;
    out.reserve(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        const double* base = pert.data() + i * T * F;
        TimeWindow w;
        w.values = Tensor({T, F}, dvec(base, base + T * F));
        w.label = labels.values()[static_cast<std::size_t>(i)];
        w.engine_id = static_cast<int>(ids.values()[static_cast<std::size_t>(i)]);
        w.end_cycle = static_cast<int>(ends.values()[static_cast<std::size_t>(i)]);
        out.push_back(std::move(w));
    }
    return out;
}

}  // namespace

void stage_prep(const RunConfig& cfg, const StageOptions& opt) {
    require_run_dir(cfg);
    const std::string sum = config_checksum(cfg);
    ojson man = load_manifest(cfg, sum);
    if (!opt.force && stage_done(man, "prep", cfg.run_dir)) {
        note(opt, "prep: up to date");
        return;
    }
    fs::path src;
    if (cfg.data_source == "synthetic") {
        src = cfg.run_dir / "data";
        fs::create_directories(src);
        SynthConfig sc;
        sc.seed = cfg.synth_seed;
        sc.noise_level = cfg.synth_noise;
        write_synthetic_dataset(src, sc);
    } else {
        src = cfg.data_dir;
    }
    ojson inputs = ojson::object();
    for (const char* f : {"train_FD001.txt", "test_FD001.txt", "RUL_FD001.txt"}) {
        const fs::path p = src / f;
        if (!fs::exists(p)) throw IoError("prep: missing input file " + p.string());
        inputs[f] = hex64(fnv1a64_file(p));
    }
    man["inputs"] = inputs;
    const Dataset ds = prepare_dataset(src, cfg.rul_cap);
    save_dataset(cfg.run_dir / "dataset.rkc", ds);
    mark_stage(man, "prep", cfg.run_dir, {"dataset.rkc"});
    save_manifest(cfg, man);
    note(opt, "prep: " + std::to_string(ds.train.engines.size()) + " train / " +
                  std::to_string(ds.test.engines.size()) + " test engines, " + std::to_string(ds.dropped.size()) +
                  " constant sensors dropped, " + std::to_string(ds.train.n_features) + " features");
}

void stage_train(const RunConfig& cfg, const StageOptions& opt) {
    require_run_dir(cfg);
    const std::string sum = config_checksum(cfg);
    ojson man = load_manifest(cfg, sum);
    if (!opt.force && stage_done(man, "train", cfg.run_dir)) {
        note(opt, "train: up to date");
        return;
    }
    const Dataset ds = require_dataset(cfg);
    std::vector<std::string> outputs;
    for (const ModelEntry& entry : cfg.models) {
        const std::string model_rel = "models/" + entry.name + ".rkc";
        const std::string log_rel = "logs/train_" + entry.name + ".csv";
        outputs.push_back(model_rel);
        outputs.push_back(log_rel);
        if (!opt.force && fs::exists(cfg.run_dir / model_rel) && fs::exists(cfg.run_dir / log_rel)) {
            note(opt, "train " + entry.name + ": exists, skipping");
            continue;
        }
        ModelSpec spec = entry.spec;
        spec.input_dim = ds.train.n_features;
        spec.label_scale = entry.label_scale > 0 ? entry.label_scale : ds.rul_cap;
        const auto windows = window(ds.train, ds.rul_cap, spec.seq_len, entry.train_stride);
        if (windows.empty())
            throw RuntimeError("train " + entry.name + ": no training windows at seq_len " +
                               std::to_string(spec.seq_len));
        RegressionModel model = build(spec);
        std::ostringstream log;
        log << "epoch,loss\n";
        train(model, windows, [&](int epoch, double loss) {
            log << epoch << "," << format_double(loss) << "\n";
        });
        model.stats = ds.stats;
        fs::create_directories(cfg.run_dir / "models");
        save_model(cfg.run_dir / model_rel, model);
        write_text(cfg.run_dir / log_rel, log.str());
        const double final_loss = model.history.empty() ? 0.0 : model.history.back();
        note(opt, "train " + entry.name + ": " + std::to_string(windows.size()) + " windows, " +
                      std::to_string(spec.epochs) + " epochs, final loss " + format_double(final_loss));
    }
    mark_stage(man, "train", cfg.run_dir, outputs);
    save_manifest(cfg, man);
}

void stage_attack(const RunConfig& cfg, const StageOptions& opt) {
    require_run_dir(cfg);
    const std::string sum = config_checksum(cfg);
    ojson man = load_manifest(cfg, sum);
    if (!opt.force && stage_done(man, "attack", cfg.run_dir)) {
        note(opt, "attack: up to date");
        return;
    }
    const Dataset ds = require_dataset(cfg);
    const EvalSet es = eval_subset(ds, cfg.min_cycles);
    std::vector<std::string> outputs;
    for (const ModelEntry& entry : cfg.models) {
        if (cfg.attacks.empty()) break;
        const RegressionModel model = require_model(cfg, entry.name);
        const auto windows = final_windows(es.traces, es.rul, ds.rul_cap, model.spec.seq_len);
        const double clean = eval_rmse(model, windows);
        for (const AttackConfig& acfg : cfg.attacks) {
            const std::string rel = "attacks/" + entry.name + "_" + attack_slug(acfg) + ".rkc";
            outputs.push_back(rel);
            if (!opt.force && fs::exists(cfg.run_dir / rel)) {
                note(opt, "attack " + entry.name + " " + acfg.label() + ": exists, skipping");
                continue;
            }
            const auto adv = attack_dataset(model, windows, acfg);
            save_attack_set(cfg.run_dir / rel, entry.name, acfg, adv);
            const double arm = adversarial_rmse(model, adv);
            note(opt, "attack " + entry.name + " " + acfg.label() + ": rmse " + format_double(arm) + " (clean " +
                          format_double(clean) + ")");
        }
    }
    mark_stage(man, "attack", cfg.run_dir, outputs);
    save_manifest(cfg, man);
}

void stage_defend(const RunConfig& cfg, const StageOptions& opt) {
    require_run_dir(cfg);
    const std::string sum = config_checksum(cfg);
    ojson man = load_manifest(cfg, sum);
    if (!opt.force && stage_done(man, "defend", cfg.run_dir)) {
        note(opt, "defend: up to date");
        return;
    }
    if (cfg.defense.modes.empty() || cfg.defense.attack_list.empty()) {
        note(opt, "defend: nothing configured, skipping");
        mark_stage(man, "defend", cfg.run_dir, {});
        save_manifest(cfg, man);
        return;
    }
    const Dataset ds = require_dataset(cfg);
    std::vector<std::string> names = cfg.defense.models;
    if (names.empty())
        for (const ModelEntry& e : cfg.models) names.push_back(e.name);
    std::vector<std::string> outputs;
    for (const std::string& name : names) {
        const ModelEntry& entry = cfg.model_entry(name);
        std::vector<std::string> rels;
        bool all_exist = true;
        for (DefenseMode mode : cfg.defense.modes) {
            rels.push_back("defended/" + name + "_" + to_string(mode) + ".rkc");
            all_exist = all_exist && fs::exists(cfg.run_dir / rels.back());
        }
        outputs.insert(outputs.end(), rels.begin(), rels.end());
        if (!opt.force && all_exist) {
            note(opt, "defend " + name + ": exists, skipping");
            continue;
        }
        const RegressionModel base = require_model(cfg, name);
        const auto full = window(ds.train, ds.rul_cap, base.spec.seq_len, entry.train_stride);
        if (full.empty()) throw RuntimeError("defend " + name + ": no training windows");
        const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(cfg.defense.train_windows), full.size());
        std::vector<TimeWindow> subset;
        subset.reserve(k);
        for (std::size_t i = 0; i < k; ++i) subset.push_back(full[i * full.size() / k]);
        const auto augmented = gen_adv_dataset(base, subset, cfg.defense.attack_list);
        for (std::size_t mi = 0; mi < cfg.defense.modes.size(); ++mi) {
            const DefenseMode mode = cfg.defense.modes[mi];
            if (!opt.force && fs::exists(cfg.run_dir / rels[mi])) continue;
            DefenseConfig dc;
            dc.attack_list = cfg.defense.attack_list;
            dc.mode = mode;
            dc.epochs = mode == DefenseMode::Plain ? cfg.defense.epochs_plain : cfg.defense.epochs_approx;
            dc.batch_size = cfg.defense.batch_size;
            dc.lr = cfg.defense.lr;
            dc.weight_groups = cfg.defense.weight_groups;
            dc.index_basis = cfg.defense.index_basis;
            dc.optimizer = cfg.defense.optimizer;
            dc.seed = cfg.defense.seed;
            RegressionModel hardened = adversarial_train(base, augmented, dc);
            hardened.stats = ds.stats;
            fs::create_directories(cfg.run_dir / "defended");
            save_model(cfg.run_dir / rels[mi], hardened);
            const double final_loss = hardened.history.empty() ? 0.0 : hardened.history.back();
            note(opt, "defend " + name + " " + to_string(mode) + ": " + std::to_string(augmented.size()) +
                          " windows, " + std::to_string(dc.epochs) + " epochs, final loss " +
                          format_double(final_loss));
        }
    }
    mark_stage(man, "defend", cfg.run_dir, outputs);
    save_manifest(cfg, man);
}

void stage_report(const RunConfig& cfg, const StageOptions& opt) {
    require_run_dir(cfg);
    const std::string sum = config_checksum(cfg);
    ojson man = load_manifest(cfg, sum);
    if (!opt.force && stage_done(man, "report", cfg.run_dir)) {
        note(opt, "report: up to date");
        return;
    }
    const Dataset ds = require_dataset(cfg);
    const EvalSet es = eval_subset(ds, cfg.min_cycles);

    std::ostringstream csv;
    csv << "model,attack,eps,clean_rmse,adv_rmse,multiplier,alpha,"
           "def_plain_clean,def_plain_adv,beta_plain,def_approx_clean,def_approx_adv,beta_approx\n";
    ojson jrows = ojson::array();
    for (const ModelEntry& entry : cfg.models) {
        const RegressionModel base = require_model(cfg, entry.name);
        const auto windows = final_windows(es.traces, es.rul, ds.rul_cap, base.spec.seq_len);
        const double e = eval_rmse(base, windows);
        std::optional<RegressionModel> plain, approx;
        const fs::path pp = cfg.run_dir / ("defended/" + entry.name + "_plain.rkc");
        const fs::path pa = cfg.run_dir / ("defended/" + entry.name + "_approximate.rkc");
        if (fs::exists(pp)) plain = load_model(pp);
        if (fs::exists(pa)) approx = load_model(pa);
        const std::optional<double> plain_clean =
            plain ? std::optional<double>(eval_rmse(*plain, windows)) : std::nullopt;
        const std::optional<double> approx_clean =
            approx ? std::optional<double>(eval_rmse(*approx, windows)) : std::nullopt;
        for (const AttackConfig& acfg : cfg.attacks) {
            const fs::path advp = cfg.run_dir / ("attacks/" + entry.name + "_" + attack_slug(acfg) + ".rkc");
            if (!fs::exists(advp)) throw RuntimeError("missing " + advp.string() + "; run the attack stage first");
            const auto advw = load_attack_set(advp, base.spec.seq_len, base.spec.input_dim);
            const double e_att = eval_rmse(base, advw);
            DefenseReportRow row;
            row.model = entry.name;
            row.attack = to_string(acfg.kind);
            row.eps = acfg.epsilon;
            row.e = e;
            row.e_att = e_att;
            row.alpha = e_att - e;
            row.e_def_plain_clean = plain_clean;
            row.e_def_approx_clean = approx_clean;
            if (plain) {
                row.e_def_plain = eval_rmse(*plain, advw);
                row.beta_plain = *row.e_def_plain - e;
            }
            if (approx) {
                row.e_def_approx = eval_rmse(*approx, advw);
                row.beta_approx = *row.e_def_approx - e;
            }
            csv << row.model << "," << row.attack << "," << format_double(row.eps) << "," << format_double(row.e)
                << "," << format_double(row.e_att) << "," << format_double(e > 0 ? e_att / e : 0.0) << ","
                << format_double(row.alpha) << "," << csv_cell(row.e_def_plain_clean) << ","
                << csv_cell(row.e_def_plain) << "," << csv_cell(row.beta_plain) << ","
                << csv_cell(row.e_def_approx_clean) << "," << csv_cell(row.e_def_approx) << ","
                << csv_cell(row.beta_approx) << "\n";
            ojson jr;
            jr["model"] = row.model;
            jr["attack"] = row.attack;
            jr["eps"] = row.eps;
            jr["clean_rmse"] = row.e;
            jr["adv_rmse"] = row.e_att;
            jr["alpha"] = row.alpha;
            if (row.e_def_plain_clean) jr["def_plain_clean"] = *row.e_def_plain_clean;
            if (row.e_def_plain) jr["def_plain_adv"] = *row.e_def_plain;
            if (row.beta_plain) jr["beta_plain"] = *row.beta_plain;
            if (row.e_def_approx_clean) jr["def_approx_clean"] = *row.e_def_approx_clean;
            if (row.e_def_approx) jr["def_approx_adv"] = *row.e_def_approx;
            if (row.beta_approx) jr["beta_approx"] = *row.beta_approx;
            jrows.push_back(jr);
        }
    }
    write_text(cfg.run_dir / "report/robustness.csv", csv.str());
    ojson top;
    top["schema_version"] = kReportSchemaVersion;
    top["rows"] = jrows;
    write_text(cfg.run_dir / "report/robustness.json", top.dump(2) + "\n");
    mark_stage(man, "report", cfg.run_dir, {"report/robustness.csv", "report/robustness.json"});
    save_manifest(cfg, man);
    note(opt, "report: " + std::to_string(jrows.size()) + " rows -> report/robustness.csv");
}

void stage_sweep(const RunConfig& cfg, const StageOptions& opt) {
    require_run_dir(cfg);
    const std::string sum = config_checksum(cfg);
    ojson man = load_manifest(cfg, sum);
    if (!opt.force && stage_done(man, "sweep", cfg.run_dir)) {
        note(opt, "sweep: up to date");
        return;
    }
    if (cfg.sweep.models.empty() || cfg.sweep.kinds.empty() || cfg.sweep.epsilons.empty()) {
        note(opt, "sweep: nothing configured, skipping");
        mark_stage(man, "sweep", cfg.run_dir, {});
        save_manifest(cfg, man);
        return;
    }
    const Dataset ds = require_dataset(cfg);
    const EvalSet es = eval_subset(ds, cfg.min_cycles);
    std::ostringstream csv;
    csv << "model,attack,eps,rmse,clean_rmse,multiplier\n";
    ojson jrows = ojson::array();
    for (const std::string& name : cfg.sweep.models) {
        const RegressionModel model = require_model(cfg, name);
        const auto windows = final_windows(es.traces, es.rul, ds.rul_cap, model.spec.seq_len);
        AttackConfig proto;
        proto.iterations = cfg.sweep.iterations;
        proto.restarts = cfg.sweep.restarts;
        proto.alpha = cfg.sweep.alpha;
        proto.seed = cfg.sweep.seed;
        const SweepResult res = epsilon_sweep(model, windows, cfg.sweep.kinds, cfg.sweep.epsilons, proto);
        for (const SweepCurve& curve : res.curves)
            for (std::size_t ei = 0; ei < res.epsilons.size(); ++ei) {
                const double mult = res.clean_rmse > 0 ? curve.rmse[ei] / res.clean_rmse : 0.0;
                csv << name << "," << to_string(curve.kind) << "," << format_double(res.epsilons[ei]) << ","
                    << format_double(curve.rmse[ei]) << "," << format_double(res.clean_rmse) << ","
                    << format_double(mult) << "\n";
                ojson jr;
                jr["model"] = name;
                jr["attack"] = to_string(curve.kind);
                jr["eps"] = res.epsilons[ei];
                jr["rmse"] = curve.rmse[ei];
                jr["clean_rmse"] = res.clean_rmse;
                jr["multiplier"] = mult;
                jrows.push_back(jr);
            }
        note(opt, "sweep " + name + ": " + std::to_string(cfg.sweep.kinds.size()) + " kinds x " +
                      std::to_string(cfg.sweep.epsilons.size()) + " epsilons");
    }
    write_text(cfg.run_dir / "report/sweep.csv", csv.str());
    ojson top;
    top["schema_version"] = kReportSchemaVersion;
    top["rows"] = jrows;
    write_text(cfg.run_dir / "report/sweep.json", top.dump(2) + "\n");
    mark_stage(man, "sweep", cfg.run_dir, {"report/sweep.csv", "report/sweep.json"});
    save_manifest(cfg, man);
}

void stage_transfer(const RunConfig& cfg, const StageOptions& opt) {
    require_run_dir(cfg);
    const std::string sum = config_checksum(cfg);
    ojson man = load_manifest(cfg, sum);
    if (!opt.force && stage_done(man, "transfer", cfg.run_dir)) {
        note(opt, "transfer: up to date");
        return;
    }
    if (cfg.transfer.models.empty() || cfg.transfer.attacks.empty()) {
        note(opt, "transfer: nothing configured, skipping");
        mark_stage(man, "transfer", cfg.run_dir, {});
        save_manifest(cfg, man);
        return;
    }
    const Dataset ds = require_dataset(cfg);
    const EvalSet es = eval_subset(ds, cfg.min_cycles);
    std::vector<RegressionModel> storage;
    storage.reserve(cfg.transfer.models.size());
    for (const std::string& name : cfg.transfer.models) storage.push_back(require_model(cfg, name));
    std::vector<const RegressionModel*> ptrs;
    for (const RegressionModel& m : storage) ptrs.push_back(&m);
    const TransferMatrix tm =
        transferability(ptrs, cfg.transfer.models, es.traces, es.rul, ds.rul_cap, cfg.transfer.attacks);
    std::ostringstream csv;
    csv << "attack,eps,source,target,rmse,target_clean,ratio\n";
    ojson jrows = ojson::array();
    for (std::size_t ai = 0; ai < tm.attacks.size(); ++ai)
        for (std::size_t s = 0; s < tm.models.size(); ++s)
            for (std::size_t t = 0; t < tm.models.size(); ++t) {
                const double v = tm.rmse[s][t][ai];
                const double clean = tm.target_clean[t];
                csv << to_string(tm.attacks[ai].kind) << "," << format_double(tm.attacks[ai].epsilon) << ","
                    << tm.models[s] << "," << tm.models[t] << "," << format_double(v) << ","
                    << format_double(clean) << "," << format_double(clean > 0 ? v / clean : 0.0) << "\n";
                ojson jr;
                jr["attack"] = to_string(tm.attacks[ai].kind);
                jr["eps"] = tm.attacks[ai].epsilon;
                jr["source"] = tm.models[s];
                jr["target"] = tm.models[t];
                jr["rmse"] = v;
                jr["target_clean"] = clean;
                jrows.push_back(jr);
            }
    write_text(cfg.run_dir / "report/transfer.csv", csv.str());
    ojson top;
    top["schema_version"] = kReportSchemaVersion;
    top["rows"] = jrows;
    write_text(cfg.run_dir / "report/transfer.json", top.dump(2) + "\n");
    mark_stage(man, "transfer", cfg.run_dir, {"report/transfer.csv", "report/transfer.json"});
    save_manifest(cfg, man);
    note(opt, "transfer: " + std::to_string(tm.models.size()) + "x" + std::to_string(tm.models.size()) +
                  " grid over " + std::to_string(tm.attacks.size()) + " attacks");
}

}  // namespace rulkit
