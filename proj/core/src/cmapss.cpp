#include "rulkit/cmapss.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "rulkit/container.hpp"
#include "rulkit/errors.hpp"

namespace rulkit {

namespace {
constexpr int kRawColumns = 26;  // id, cycle, 3 settings, 21 sensors
constexpr int kRawSensors = 21;

double parse_field(std::string_view tok, const std::string& where) {
    double v = 0.0;
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    auto [p, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || p != last) throw ParseError(where + ": bad numeric field '" + std::string(tok) + "'");
    if (!std::isfinite(v)) throw ParseError(where + ": non-finite field");
    return v;
}
}  // namespace

const EngineTrace& SensorData::by_id(int id) const {
    for (const auto& e : engines)
        if (e.id == id) return e;
    throw RuntimeError("no engine with id " + std::to_string(id));
}

SensorData load_raw(const std::filesystem::path& file) {
    std::ifstream f(file);
    if (!f) throw IoError("cannot open " + file.string());

    SensorData out;
    out.n_features = kRawSensors;
    dvec rows;  // current engine, row-major 21-wide
    int cur_id = -1, expect_cycle = 1, lineno = 0;
    auto flush = [&] {
        if (cur_id < 0) return;
        const auto n = static_cast<std::int64_t>(rows.size()) / kRawSensors;
        out.engines.push_back({cur_id, Tensor({n, kRawSensors}, rows)});
        rows.clear();
    };

    std::string line;
    std::vector<std::string_view> toks;
    while (std::getline(f, line)) {
        ++lineno;
        toks.clear();
        std::string_view sv(line);
        std::size_t i = 0;
        while (i < sv.size()) {
            while (i < sv.size() && (sv[i] == ' ' || sv[i] == '\t' || sv[i] == '\r')) ++i;
            std::size_t j = i;
            while (j < sv.size() && sv[j] != ' ' && sv[j] != '\t' && sv[j] != '\r') ++j;
            if (j > i) toks.push_back(sv.substr(i, j - i));
            i = j;
        }
        if (toks.empty()) continue;
        const std::string where = file.filename().string() + ":" + std::to_string(lineno);
        if (static_cast<int>(toks.size()) != kRawColumns)
            throw ParseError(where + ": expected " + std::to_string(kRawColumns) + " columns, got " +
                             std::to_string(toks.size()));
        const int id = static_cast<int>(parse_field(toks[0], where));
        const int cycle = static_cast<int>(parse_field(toks[1], where));
        if (id != cur_id) {
            flush();
            cur_id = id;
            expect_cycle = 1;
        }
        if (cycle != expect_cycle)
            throw ParseError(where + ": engine " + std::to_string(id) + " cycle " + std::to_string(cycle) +
                             " out of order (expected " + std::to_string(expect_cycle) + ")");
        ++expect_cycle;
        parse_field(toks[2], where);  // settings: validated, not features
        parse_field(toks[3], where);
        parse_field(toks[4], where);
        for (int s = 0; s < kRawSensors; ++s) rows.push_back(parse_field(toks[static_cast<std::size_t>(5 + s)], where));
    }
    flush();
    if (out.engines.empty()) throw ParseError(file.string() + ": no data rows");
    return out;
}

std::vector<double> load_rul_file(const std::filesystem::path& file) {
    std::ifstream f(file);
    if (!f) throw IoError("cannot open " + file.string());
    std::vector<double> out;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        std::string_view sv(line);
        while (!sv.empty() && (sv.back() == '\r' || sv.back() == ' ' || sv.back() == '\t')) sv.remove_suffix(1);
        while (!sv.empty() && (sv.front() == ' ' || sv.front() == '\t')) sv.remove_prefix(1);
        if (sv.empty()) continue;
        out.push_back(parse_field(sv, file.filename().string() + ":" + std::to_string(lineno)));
    }
    if (out.empty()) throw ParseError(file.string() + ": no values");
    return out;
}

std::vector<int> constant_sensors(const SensorData& train, double tol) {
    if (train.engines.empty()) throw RuntimeError("constant_sensors: empty data");
    const int F = train.n_features;
    // Two passes: E[(x - mean)^2]. The one-pass E[x^2] - mean^2 form cancels
    // catastrophically for channels that are constant at a large value.
    std::vector<double> sum(static_cast<std::size_t>(F), 0.0);
    std::int64_t n = 0;
    for (const auto& e : train.engines) {
        const auto rows = e.sensors.dim(0);
        for (std::int64_t r = 0; r < rows; ++r)
            for (int c = 0; c < F; ++c) sum[static_cast<std::size_t>(c)] += e.sensors.at(r, c);
        n += rows;
    }
    std::vector<double> var(static_cast<std::size_t>(F), 0.0);
    for (const auto& e : train.engines) {
        const auto rows = e.sensors.dim(0);
        for (std::int64_t r = 0; r < rows; ++r)
            for (int c = 0; c < F; ++c) {
                const double d = e.sensors.at(r, c) - sum[static_cast<std::size_t>(c)] / static_cast<double>(n);
                var[static_cast<std::size_t>(c)] += d * d;
            }
    }
    std::vector<int> out;
    for (int c = 0; c < F; ++c)
        if (var[static_cast<std::size_t>(c)] / static_cast<double>(n) < tol) out.push_back(c);
    return out;
}

SensorData drop_sensors(const SensorData& data, const std::vector<int>& drop) {
    std::vector<bool> dead(static_cast<std::size_t>(data.n_features), false);
    for (int d : drop) {
        if (d < 0 || d >= data.n_features) throw RuntimeError("drop_sensors: index out of range");
        dead[static_cast<std::size_t>(d)] = true;
    }
    std::vector<int> keep;
    for (int c = 0; c < data.n_features; ++c)
        if (!dead[static_cast<std::size_t>(c)]) keep.push_back(c);

    SensorData out;
    out.n_features = static_cast<int>(keep.size());
    out.engines.reserve(data.engines.size());
    for (const auto& e : data.engines) {
        const auto rows = e.sensors.dim(0);
        Tensor t({rows, static_cast<std::int64_t>(keep.size())});
        for (std::int64_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < keep.size(); ++c) t.at(r, static_cast<std::int64_t>(c)) = e.sensors.at(r, keep[c]);
        out.engines.push_back({e.id, std::move(t)});
    }
    return out;
}

NormStats minmax_stats(const SensorData& train) {
    if (train.engines.empty()) throw RuntimeError("minmax_stats: empty data");
    const int F = train.n_features;
    NormStats s;
    s.lo.assign(static_cast<std::size_t>(F), std::numeric_limits<double>::infinity());
    s.hi.assign(static_cast<std::size_t>(F), -std::numeric_limits<double>::infinity());
    for (const auto& e : train.engines)
        for (std::int64_t r = 0; r < e.sensors.dim(0); ++r)
            for (int c = 0; c < F; ++c) {
                const double v = e.sensors.at(r, c);
                auto& lo = s.lo[static_cast<std::size_t>(c)];
                auto& hi = s.hi[static_cast<std::size_t>(c)];
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
    return s;
}

SensorData apply_norm(const SensorData& data, const NormStats& stats) {
    if (static_cast<int>(stats.lo.size()) != data.n_features)
        throw RuntimeError("apply_norm: stats cover " + std::to_string(stats.lo.size()) + " features, data has " +
                           std::to_string(data.n_features));
    SensorData out;
    out.n_features = data.n_features;
    out.engines.reserve(data.engines.size());
    for (const auto& e : data.engines) {
        Tensor t(e.sensors.shape());
        for (std::int64_t r = 0; r < e.sensors.dim(0); ++r)
            for (int c = 0; c < data.n_features; ++c) {
                const double span = stats.hi[static_cast<std::size_t>(c)] - stats.lo[static_cast<std::size_t>(c)];
                t.at(r, c) = span > 0.0 ? (e.sensors.at(r, c) - stats.lo[static_cast<std::size_t>(c)]) / span : 0.0;
            }
        out.engines.push_back({e.id, std::move(t)});
    }
    return out;
}

std::vector<double> rul_labels(int total_cycles, double cap) {
    if (cap <= 0) throw RuntimeError("rul_labels: cap must be positive");
    std::vector<double> out(static_cast<std::size_t>(total_cycles));
    for (int t = 0; t < total_cycles; ++t)
        out[static_cast<std::size_t>(t)] = std::min(cap, static_cast<double>(total_cycles - (t + 1)));
    return out;
}

std::vector<TimeWindow> window(const SensorData& data, double rul_cap, int T, int stride) {
    if (T < 1 || stride < 1) throw RuntimeError("window: T and stride must be >= 1");
    std::vector<TimeWindow> out;
    for (const auto& e : data.engines) {
        const auto L = static_cast<int>(e.sensors.dim(0));
        if (L < T) continue;
        const auto labels = rul_labels(L, rul_cap);
        for (int start = 0; start + T <= L; start += stride) {
            TimeWindow w;
            w.values = Tensor({T, static_cast<std::int64_t>(data.n_features)});
            std::copy_n(e.sensors.data() + static_cast<std::ptrdiff_t>(start) * data.n_features,
                        static_cast<std::size_t>(T) * static_cast<std::size_t>(data.n_features), w.values.data());
            w.end_cycle = start + T;
            w.label = labels[static_cast<std::size_t>(w.end_cycle - 1)];
            w.engine_id = e.id;
            out.push_back(std::move(w));
        }
    }
    return out;
}

std::vector<TimeWindow> final_windows(const SensorData& data, const std::vector<double>& final_rul,
                                      double rul_cap, int T) {
    if (final_rul.size() != data.engines.size())
        throw RuntimeError("final_windows: " + std::to_string(final_rul.size()) + " RUL values for " +
                           std::to_string(data.engines.size()) + " engines");
    std::vector<TimeWindow> out;
    out.reserve(data.engines.size());
    const int F = data.n_features;
    for (std::size_t i = 0; i < data.engines.size(); ++i) {
        const auto& e = data.engines[i];
        const auto L = static_cast<int>(e.sensors.dim(0));
        TimeWindow w;
        w.values = Tensor({T, static_cast<std::int64_t>(F)});
        for (int t = 0; t < T; ++t) {
            const int src = std::max(0, L - T + t);  // left-pad short engines with the earliest row
            std::copy_n(e.sensors.data() + static_cast<std::ptrdiff_t>(src) * F, static_cast<std::size_t>(F),
                        w.values.data() + static_cast<std::ptrdiff_t>(t) * F);
        }
        w.engine_id = e.id;
        w.end_cycle = L;
        w.label = std::min(rul_cap, final_rul[i]);
        out.push_back(std::move(w));
    }
    return out;
}

std::vector<std::size_t> indices_min_cycles(const SensorData& data, int min_cycles) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < data.engines.size(); ++i)
        if (data.engines[i].sensors.dim(0) >= min_cycles) out.push_back(i);
    return out;
}

SensorData subset_min_cycles(const SensorData& data, int min_cycles) {
    SensorData out;
    out.n_features = data.n_features;
    for (auto i : indices_min_cycles(data, min_cycles)) out.engines.push_back(data.engines[i]);
    return out;
}

Dataset prepare_dataset(const std::filesystem::path& dir, double rul_cap, double tol) {
    const auto train_file = dir / "train_FD001.txt";
    const auto test_file = dir / "test_FD001.txt";
    const auto rul_file = dir / "RUL_FD001.txt";
    for (const auto& p : {train_file, test_file, rul_file})
        if (!std::filesystem::exists(p))
            throw IoError("dataset file missing: " + p.string() + " (expected train_FD001.txt, test_FD001.txt, RUL_FD001.txt)");

    SensorData train = load_raw(train_file);
    SensorData test = load_raw(test_file);
    Dataset ds;
    ds.rul_cap = rul_cap;
    ds.test_final_rul = load_rul_file(rul_file);
    if (ds.test_final_rul.size() != test.engines.size())
        throw ParseError("RUL file has " + std::to_string(ds.test_final_rul.size()) + " values for " +
                         std::to_string(test.engines.size()) + " test engines");
    ds.dropped = constant_sensors(train, tol);
    train = drop_sensors(train, ds.dropped);
    test = drop_sensors(test, ds.dropped);
    ds.stats = minmax_stats(train);
    ds.train = apply_norm(train, ds.stats);
    ds.test = apply_norm(test, ds.stats);
    return ds;
}

void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
    nlohmann::ordered_json meta;
    meta["schema"] = "dataset";
    meta["rul_cap"] = ds.rul_cap;
    meta["dropped_sensors"] = ds.dropped;
    meta["norm_lo"] = ds.stats.lo;
    meta["norm_hi"] = ds.stats.hi;
    std::vector<int> train_ids, test_ids;
    for (const auto& e : ds.train.engines) train_ids.push_back(e.id);
    for (const auto& e : ds.test.engines) test_ids.push_back(e.id);
    meta["train_ids"] = train_ids;
    meta["test_ids"] = test_ids;
    meta["n_features"] = ds.train.n_features;

    Container c;
    c.meta = meta.dump();
    for (const auto& e : ds.train.engines) c.arrays.emplace_back("train/" + std::to_string(e.id), e.sensors);
    for (const auto& e : ds.test.engines) c.arrays.emplace_back("test/" + std::to_string(e.id), e.sensors);
    c.arrays.emplace_back("test_final_rul",
                          Tensor({static_cast<std::int64_t>(ds.test_final_rul.size())},
                                 dvec(ds.test_final_rul.begin(), ds.test_final_rul.end())));
    save_container(path, c);
}

Dataset load_dataset(const std::filesystem::path& path) {
    Container c = load_container(path);
    nlohmann::json meta = nlohmann::json::parse(c.meta);
    if (meta.value("schema", "") != "dataset") throw ParseError(path.string() + ": not a dataset container");
    Dataset ds;
    ds.rul_cap = meta.at("rul_cap").get<double>();
    ds.dropped = meta.at("dropped_sensors").get<std::vector<int>>();
    ds.stats.lo = meta.at("norm_lo").get<std::vector<double>>();
    ds.stats.hi = meta.at("norm_hi").get<std::vector<double>>();
    ds.train.n_features = meta.at("n_features").get<int>();
    ds.test.n_features = ds.train.n_features;
    for (int id : meta.at("train_ids").get<std::vector<int>>())
        ds.train.engines.push_back({id, c.array("train/" + std::to_string(id))});
    for (int id : meta.at("test_ids").get<std::vector<int>>())
        ds.test.engines.push_back({id, c.array("test/" + std::to_string(id))});
    const Tensor& rul = c.array("test_final_rul");
    ds.test_final_rul.assign(rul.values().begin(), rul.values().end());
    return ds;
}

}  // namespace rulkit
