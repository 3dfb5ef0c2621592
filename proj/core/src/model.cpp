#include "rulkit/model.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

#include "rulkit/container.hpp"
#include "rulkit/errors.hpp"
#include "rulkit/optim.hpp"

namespace rulkit {

Arch arch_from_string(const std::string& s) {
    if (s == "cnn") return Arch::CNN;
    if (s == "lstm") return Arch::LSTM;
    if (s == "gru") return Arch::GRU;
    if (s == "bilstm") return Arch::BiLSTM;
    throw ConfigError("unknown architecture '" + s + "' (expected cnn|lstm|gru|bilstm)");
}

std::string to_string(Arch a) {
    switch (a) {
        case Arch::CNN: return "cnn";
        case Arch::LSTM: return "lstm";
        case Arch::GRU: return "gru";
        case Arch::BiLSTM: return "bilstm";
    }
    return "?";
}

namespace {
constexpr int kConvKernel = 5;

void validate_spec(const ModelSpec& spec) {
    if (spec.hidden.empty()) throw ConfigError("model spec: hidden sizes must be non-empty");
    for (int h : spec.hidden)
        if (h <= 0) throw ConfigError("model spec: hidden sizes must be positive");
    if (spec.seq_len < 1 || spec.input_dim < 1) throw ConfigError("model spec: bad window dims");
    if (spec.batch_size < 1) throw ConfigError("model spec: batch_size must be >= 1");
    if (spec.epochs < 0) throw ConfigError("model spec: epochs must be >= 0");
    if (!(spec.lr > 0)) throw ConfigError("model spec: learning rate must be positive");
    if (!(spec.label_scale > 0)) throw ConfigError("model spec: label_scale must be positive");
    if (spec.optimizer != "adam" && spec.optimizer != "sgd")
        throw ConfigError("model spec: optimizer must be adam or sgd");
}
}  // namespace

RegressionModel build(const ModelSpec& spec) {
    validate_spec(spec);
    std::vector<LayerDesc> layers;
    Readout readout = Readout::LastState;
    for (int h : spec.hidden) {
        LayerDesc l;
        l.units = h;
        switch (spec.arch) {
            case Arch::CNN:
                l.kind = LayerKind::Conv1D;
                l.kernel = kConvKernel;
                readout = Readout::Flatten;
                break;
            case Arch::LSTM: l.kind = LayerKind::LSTM; break;
            case Arch::GRU: l.kind = LayerKind::GRU; break;
            case Arch::BiLSTM: l.kind = LayerKind::BiLSTM; break;
        }
        layers.push_back(l);
    }
    RegressionModel m;
    m.spec = spec;
    m.net = make_network(spec.seq_len, spec.input_dim, std::move(layers), readout, spec.seed);
    return m;
}

void train(RegressionModel& model, const std::vector<TimeWindow>& windows, const EpochHook& hook) {
    if (model.spec.epochs == 0) return;
    if (windows.empty()) throw RuntimeError("train: no windows");
    for (const auto& w : windows)
        if (w.values.rank() != 2 || w.values.dim(0) != model.net.seq_len || w.values.dim(1) != model.net.input_dim)
            throw RuntimeError("train: window shape " + w.values.shape_str() + " incompatible with model");

    const std::size_t n = windows.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng shuffle_rng(mix_seed(model.spec.seed, 0x5f0e));
    ParameterSet grads = model.net.params.zeros_like();
    AdamState adam = AdamState::init(model.net.params);
    const bool use_adam = model.spec.optimizer == "adam";
    const std::size_t bs = static_cast<std::size_t>(model.spec.batch_size);

    std::vector<const double*> batch_ptrs;
    std::vector<double> batch_labels;
    const double ls = model.spec.label_scale;
    for (int epoch = 0; epoch < model.spec.epochs; ++epoch) {
        shuffle_rng.shuffle(idx);
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < n; start += bs) {
            const std::size_t stop = std::min(n, start + bs);
            batch_ptrs.clear();
            batch_labels.clear();
            for (std::size_t k = start; k < stop; ++k) {
                batch_ptrs.push_back(windows[idx[k]].values.data());
                batch_labels.push_back(windows[idx[k]].label / ls);
            }
            const double loss = batch_loss_grad(model.net, batch_ptrs, batch_labels, grads);
            if (!std::isfinite(loss))
                throw RuntimeError("train: loss diverged to NaN/inf at epoch " + std::to_string(epoch) +
                                   "; lower the learning rate (current " + std::to_string(model.spec.lr) + ")");
            if (use_adam)
                adam_update(model.net.params, grads, adam, model.spec.lr);
            else
                sgd_update(model.net.params, grads, model.spec.lr);
            epoch_loss += loss * static_cast<double>(stop - start);
            seen += stop - start;
        }
        const double mean_loss = epoch_loss / static_cast<double>(seen) * ls * ls;
        model.history.push_back(mean_loss);
        if (hook) hook(epoch, mean_loss);
    }
}

std::vector<double> predict_rul(const RegressionModel& model, const std::vector<TimeWindow>& windows) {
    std::vector<double> out;
    out.reserve(windows.size());
    for (const auto& w : windows) out.push_back(forward(model.net, w.values) * model.spec.label_scale);
    return out;
}

double rmse(std::span<const double> predictions, std::span<const double> labels) {
    if (predictions.empty() || predictions.size() != labels.size())
        throw ConfigError("rmse: inputs must be equal-length and non-empty");
    return std::sqrt(mse_loss(predictions, labels));
}

double eval_rmse(const RegressionModel& model, const std::vector<TimeWindow>& windows) {
    const auto preds = predict_rul(model, windows);
    std::vector<double> labels;
    labels.reserve(windows.size());
    for (const auto& w : windows) labels.push_back(w.label);
    return rmse(preds, labels);
}

std::vector<TracePoint> piecewise_rul_trace(const RegressionModel& model, const EngineTrace& trace,
                                            double final_rul, double rul_cap) {
    const int L = static_cast<int>(trace.sensors.dim(0));
    const int T = model.net.seq_len;
    if (L < T) throw RuntimeError("piecewise_rul_trace: trace shorter than the model window");
    if (trace.sensors.dim(1) != model.net.input_dim)
        throw RuntimeError("piecewise_rul_trace: feature count mismatch");
    std::vector<TracePoint> out;
    out.reserve(static_cast<std::size_t>(L - T + 1));
    Tensor w({T, trace.sensors.dim(1)});
    const int F = static_cast<int>(trace.sensors.dim(1));
    for (int end = T; end <= L; ++end) {
        std::copy_n(trace.sensors.data() + static_cast<std::ptrdiff_t>(end - T) * F,
                    static_cast<std::size_t>(T) * static_cast<std::size_t>(F), w.data());
        TracePoint pt;
        pt.cycle = end;
        pt.predicted = forward(model.net, w) * model.spec.label_scale;
        pt.truth = std::min(rul_cap, final_rul + static_cast<double>(L - end));
        out.push_back(pt);
    }
    return out;
}

void save_model(const std::filesystem::path& path, const RegressionModel& model) {
    nlohmann::ordered_json meta;
    meta["schema"] = "model";
    meta["arch"] = to_string(model.spec.arch);
    meta["hidden"] = model.spec.hidden;
    meta["seq_len"] = model.spec.seq_len;
    meta["input_dim"] = model.spec.input_dim;
    meta["batch_size"] = model.spec.batch_size;
    meta["epochs"] = model.spec.epochs;
    meta["lr"] = model.spec.lr;
    meta["optimizer"] = model.spec.optimizer;
    meta["seed"] = model.spec.seed;
    meta["label_scale"] = model.spec.label_scale;
    meta["history"] = model.history;
    meta["norm_lo"] = model.stats.lo;
    meta["norm_hi"] = model.stats.hi;

    Container c;
    c.meta = meta.dump();
    for (const auto& e : model.net.params.entries()) c.arrays.emplace_back(e.name, e.value);
    save_container(path, c);
}

RegressionModel load_model(const std::filesystem::path& path) {
    Container c = load_container(path);
    nlohmann::json meta = nlohmann::json::parse(c.meta);
    if (meta.value("schema", "") != "model") throw ParseError(path.string() + ": not a model checkpoint");
    ModelSpec spec;
    spec.arch = arch_from_string(meta.at("arch").get<std::string>());
    spec.hidden = meta.at("hidden").get<std::vector<int>>();
    spec.seq_len = meta.at("seq_len").get<int>();
    spec.input_dim = meta.at("input_dim").get<int>();
    spec.batch_size = meta.at("batch_size").get<int>();
    spec.epochs = meta.at("epochs").get<int>();
    spec.lr = meta.at("lr").get<double>();
    spec.optimizer = meta.at("optimizer").get<std::string>();
    spec.seed = meta.at("seed").get<std::uint64_t>();
    spec.label_scale = meta.at("label_scale").get<double>();

    RegressionModel m = build(spec);
    m.history = meta.at("history").get<std::vector<double>>();
    m.stats.lo = meta.at("norm_lo").get<std::vector<double>>();
    m.stats.hi = meta.at("norm_hi").get<std::vector<double>>();
    for (auto& e : m.net.params.entries()) {
        const Tensor& stored = c.array(e.name);
        if (stored.shape() != e.value.shape())
            throw ParseError(path.string() + ": parameter " + e.name + " has shape " + stored.shape_str() +
                             ", expected " + e.value.shape_str());
        e.value = stored;
    }
    return m;
}

RegressionModel load_model_as(const std::filesystem::path& path, Arch expected) {
    RegressionModel m = load_model(path);
    if (m.spec.arch != expected)
        throw ConfigError(path.string() + ": checkpoint holds a " + to_string(m.spec.arch) + " model, expected " +
                          to_string(expected));
    return m;
}

}  // namespace rulkit
