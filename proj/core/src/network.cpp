#include "rulkit/network.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <sstream>
#include <variant>

#include "rulkit/errors.hpp"

namespace rulkit {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using MatMap = Eigen::Map<Mat>;
using CMatMap = Eigen::Map<const Mat>;
using VecMap = Eigen::Map<Vec>;
using CVecMap = Eigen::Map<const Vec>;

CMatMap mat_of(const Tensor& t, Eigen::Index rows, Eigen::Index cols) {
    return CMatMap(t.data(), rows, cols);
}
MatMap mat_of(Tensor& t, Eigen::Index rows, Eigen::Index cols) {
    return MatMap(t.data(), rows, cols);
}
CVecMap vec_of(const Tensor& t) { return CVecMap(t.data(), t.size()); }
VecMap vec_of(Tensor& t) { return VecMap(t.data(), t.size()); }

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Activations of one layer across time: step t occupies rows [t*B, (t+1)*B).
struct Seq {
    int T = 0, B = 0, F = 0;
    Mat m;
    Seq() = default;
    Seq(int t, int b, int f) : T(t), B(b), F(f), m(Mat::Zero(static_cast<Eigen::Index>(t) * b, f)) {}
    auto step(int t) { return m.middleRows(static_cast<Eigen::Index>(t) * B, B); }
    auto step(int t) const { return m.middleRows(static_cast<Eigen::Index>(t) * B, B); }
};

struct DenseCache {};  // output seq doubles as the activation cache

struct ConvCache {
    Mat col;  // (T_out*B) x (K*F_in), row (t*B+b) = x[b, t..t+K-1, :]
};

struct LstmCache {
    Mat gates;  // (T*B) x 4H, post-activation, blocks [i f g o]
    Mat c, tc;  // (T*B) x H
};

struct GruCache {
    Mat gacts;  // (T*B) x 3H, post-activation, blocks [r z n]
    Mat rh;     // (T*B) x H, r_t * h_{t-1}
};

struct BiCache {
    LstmCache fw, bw;
    Seq xs_rev;             // reversed input fed to the backward direction
    Seq hs_fw, hs_bw_proc;  // per-direction outputs (bw in processing order)
};

using LayerCache = std::variant<DenseCache, ConvCache, LstmCache, GruCache, BiCache>;

struct Pass {
    std::vector<Seq> acts;  // acts[0] = input, acts[i+1] = output of layer i
    std::vector<LayerCache> caches;
    Mat head_in;  // B x head_in
    Vec preds;    // B
};

void apply_activation(Mat& x, Activation a) {
    switch (a) {
        case Activation::None: break;
        case Activation::ReLU: x = x.cwiseMax(0.0); break;
        case Activation::Tanh: x = x.array().tanh().matrix(); break;
        case Activation::Sigmoid: x = x.unaryExpr([](double v) { return sigmoid(v); }); break;
    }
}

// act'(pre) expressed through the cached *outputs*; ReLU'(0) := 0.
void activation_backward(Mat& dout, const Mat& out, Activation a) {
    switch (a) {
        case Activation::None: break;
        case Activation::ReLU:
            dout.array() *= (out.array() > 0.0).cast<double>();
            break;
        case Activation::Tanh:
            dout.array() *= 1.0 - out.array().square();
            break;
        case Activation::Sigmoid:
            dout.array() *= out.array() * (1.0 - out.array());
            break;
    }
}

// ------------------------------------------------------------------ dense

void dense_forward(const Seq& xs, const Tensor& w, const Tensor& b, Activation act, Seq& out) {
    auto W = mat_of(w, out.F, xs.F);
    out.m.noalias() = xs.m * W.transpose();
    out.m.rowwise() += vec_of(b).transpose();
    apply_activation(out.m, act);
}

void dense_backward(const Seq& xs, const Tensor& w, Activation act, const Seq& out, Mat& dout,
                    Tensor& dw, Tensor& db, Mat* dxs) {
    activation_backward(dout, out.m, act);
    auto W = mat_of(w, out.F, xs.F);
    mat_of(dw, out.F, xs.F).noalias() = dout.transpose() * xs.m;
    vec_of(db) = dout.colwise().sum();
    if (dxs) dxs->noalias() = dout * W;
}

// ------------------------------------------------------------------ conv1d

void conv_forward(const Seq& xs, const Tensor& w, const Tensor& b, int K, Seq& out, ConvCache& cc) {
    const int B = xs.B, Fin = xs.F, Tout = out.T;
    cc.col.resize(static_cast<Eigen::Index>(Tout) * B, static_cast<Eigen::Index>(K) * Fin);
    for (int t = 0; t < Tout; ++t)
        for (int k = 0; k < K; ++k)
            cc.col.block(static_cast<Eigen::Index>(t) * B, static_cast<Eigen::Index>(k) * Fin, B, Fin) = xs.step(t + k);
    auto W = mat_of(w, out.F, static_cast<Eigen::Index>(K) * Fin);  // (F, K, Fin) flattens to F x (K*Fin)
    out.m.noalias() = cc.col * W.transpose();
    out.m.rowwise() += vec_of(b).transpose();
    out.m = out.m.cwiseMax(0.0);
}

void conv_backward(const Seq& xs, const Tensor& w, int K, const Seq& out, const ConvCache& cc,
                   Mat& dout, Tensor& dw, Tensor& db, Mat* dxs) {
    const int B = xs.B, Fin = xs.F, Tout = out.T;
    dout.array() *= (out.m.array() > 0.0).cast<double>();
    auto W = mat_of(w, out.F, static_cast<Eigen::Index>(K) * Fin);
    mat_of(dw, out.F, static_cast<Eigen::Index>(K) * Fin).noalias() = dout.transpose() * cc.col;
    vec_of(db) = dout.colwise().sum();
    if (dxs) {
        Mat dcol = dout * W;
        dxs->setZero();
        for (int t = 0; t < Tout; ++t)
            for (int k = 0; k < K; ++k)
                dxs->middleRows(static_cast<Eigen::Index>(t + k) * B, B) +=
                    dcol.block(static_cast<Eigen::Index>(t) * B, static_cast<Eigen::Index>(k) * Fin, B, Fin);
    }
}

// ------------------------------------------------------------------ lstm

// Shared by the LSTM layer and both directions of the BiLSTM.
void lstm_core_forward(const Seq& xs, CMatMap W, CMatMap U, CVecMap b, Seq& hs, LstmCache& cc) {
    const int T = xs.T, B = xs.B, H = hs.F;
    cc.gates.resize(static_cast<Eigen::Index>(T) * B, 4 * H);
    cc.c.resize(static_cast<Eigen::Index>(T) * B, H);
    cc.tc.resize(static_cast<Eigen::Index>(T) * B, H);
    cc.gates.noalias() = xs.m * W.transpose();
    cc.gates.rowwise() += b.transpose();
    for (int t = 0; t < T; ++t) {
        auto G = cc.gates.middleRows(static_cast<Eigen::Index>(t) * B, B);
        if (t > 0) G.noalias() += hs.step(t - 1) * U.transpose();
        G.leftCols(2 * H) = G.leftCols(2 * H).unaryExpr([](double v) { return sigmoid(v); });
        G.middleCols(2 * H, H) = G.middleCols(2 * H, H).array().tanh().matrix();
        G.rightCols(H) = G.rightCols(H).unaryExpr([](double v) { return sigmoid(v); });
        auto c_t = cc.c.middleRows(static_cast<Eigen::Index>(t) * B, B);
        c_t.array() = G.leftCols(H).array() * G.middleCols(2 * H, H).array();  // i*g
        if (t > 0)
            c_t.array() += G.middleCols(H, H).array() * cc.c.middleRows(static_cast<Eigen::Index>(t - 1) * B, B).array();
        auto tc_t = cc.tc.middleRows(static_cast<Eigen::Index>(t) * B, B);
        tc_t.array() = c_t.array().tanh();
        hs.step(t).array() = G.rightCols(H).array() * tc_t.array();
    }
}

// dh_seq holds dJ/dh_t on entry and accumulates the recurrent flow in place.
void lstm_core_backward(const Seq& xs, CMatMap W, CMatMap U, const Seq& hs, const LstmCache& cc,
                        Mat& dh_seq, Mat* dxs, MatMap dW, MatMap dU, VecMap db) {
    const int T = xs.T, B = xs.B, H = hs.F;
    Mat dG(static_cast<Eigen::Index>(T) * B, 4 * H);
    Mat dc = Mat::Zero(B, H);
    for (int t = T - 1; t >= 0; --t) {
        auto G = cc.gates.middleRows(static_cast<Eigen::Index>(t) * B, B);
        auto i = G.leftCols(H), f = G.middleCols(H, H), g = G.middleCols(2 * H, H), o = G.rightCols(H);
        auto tc = cc.tc.middleRows(static_cast<Eigen::Index>(t) * B, B);
        auto dh = dh_seq.middleRows(static_cast<Eigen::Index>(t) * B, B);
        auto dGt = dG.middleRows(static_cast<Eigen::Index>(t) * B, B);
        dc.array() += dh.array() * o.array() * (1.0 - tc.array().square());
        dGt.rightCols(H).array() = dh.array() * tc.array() * o.array() * (1.0 - o.array());
        dGt.leftCols(H).array() = dc.array() * g.array() * i.array() * (1.0 - i.array());
        if (t > 0) {
            auto c_prev = cc.c.middleRows(static_cast<Eigen::Index>(t - 1) * B, B);
            dGt.middleCols(H, H).array() = dc.array() * c_prev.array() * f.array() * (1.0 - f.array());
        } else {
            dGt.middleCols(H, H).setZero();
        }
        dGt.middleCols(2 * H, H).array() = dc.array() * i.array() * (1.0 - g.array().square());
        if (t > 0) dh_seq.middleRows(static_cast<Eigen::Index>(t - 1) * B, B).noalias() += dGt * U;
        dc.array() *= f.array();
    }
    dW.noalias() = dG.transpose() * xs.m;
    db = dG.colwise().sum();
    Mat hprev = Mat::Zero(static_cast<Eigen::Index>(T) * B, H);
    for (int t = 1; t < T; ++t) hprev.middleRows(static_cast<Eigen::Index>(t) * B, B) = hs.step(t - 1);
    dU.noalias() = dG.transpose() * hprev;
    if (dxs) dxs->noalias() = dG * W;
}

// ------------------------------------------------------------------ gru

void gru_forward(const Seq& xs, const Tensor& w, const Tensor& u, const Tensor& b, Seq& hs, GruCache& cc) {
    const int T = xs.T, B = xs.B, H = hs.F;
    auto W = mat_of(w, 3 * H, xs.F);
    auto U = mat_of(u, 3 * H, H);
    auto Urz = U.topRows(2 * H);
    auto Un = U.bottomRows(H);
    cc.gacts.resize(static_cast<Eigen::Index>(T) * B, 3 * H);
    cc.rh = Mat::Zero(static_cast<Eigen::Index>(T) * B, H);
    cc.gacts.noalias() = xs.m * W.transpose();
    cc.gacts.rowwise() += vec_of(b).transpose();
    for (int t = 0; t < T; ++t) {
        auto A = cc.gacts.middleRows(static_cast<Eigen::Index>(t) * B, B);
        if (t > 0) A.leftCols(2 * H).noalias() += hs.step(t - 1) * Urz.transpose();
        A.leftCols(2 * H) = A.leftCols(2 * H).unaryExpr([](double v) { return sigmoid(v); });
        auto rh_t = cc.rh.middleRows(static_cast<Eigen::Index>(t) * B, B);
        if (t > 0) {
            rh_t.array() = A.leftCols(H).array() * hs.step(t - 1).array();
            A.rightCols(H).noalias() += rh_t * Un.transpose();
        }
        A.rightCols(H) = A.rightCols(H).array().tanh().matrix();
        // h_t = z*h_prev + (1-z)*n
        if (t > 0)
            hs.step(t).array() = A.middleCols(H, H).array() * hs.step(t - 1).array() +
                                 (1.0 - A.middleCols(H, H).array()) * A.rightCols(H).array();
        else
            hs.step(t).array() = (1.0 - A.middleCols(H, H).array()) * A.rightCols(H).array();
    }
}

void gru_backward(const Seq& xs, const Tensor& w, const Tensor& u, const Seq& hs, const GruCache& cc,
                  Mat& dh_seq, Mat* dxs, Tensor& dw, Tensor& du, Tensor& db) {
    const int T = xs.T, B = xs.B, H = hs.F;
    auto W = mat_of(w, 3 * H, xs.F);
    auto U = mat_of(u, 3 * H, H);
    auto Urz = U.topRows(2 * H);
    auto Un = U.bottomRows(H);
    Mat dG(static_cast<Eigen::Index>(T) * B, 3 * H);
    Mat drh(B, H), dhp(B, H);
    for (int t = T - 1; t >= 0; --t) {
        auto A = cc.gacts.middleRows(static_cast<Eigen::Index>(t) * B, B);
        auto r = A.leftCols(H), z = A.middleCols(H, H), n = A.rightCols(H);
        auto dh = dh_seq.middleRows(static_cast<Eigen::Index>(t) * B, B);
        auto dGt = dG.middleRows(static_cast<Eigen::Index>(t) * B, B);
        // dJ/dn and the candidate pre-activation
        dGt.rightCols(H).array() = dh.array() * (1.0 - z.array()) * (1.0 - n.array().square());
        drh.noalias() = dGt.rightCols(H) * Un;
        if (t > 0) {
            auto h_prev = hs.step(t - 1);
            dhp.array() = dh.array() * z.array() + drh.array() * r.array();
            dGt.middleCols(H, H).array() =
                dh.array() * (h_prev.array() - n.array()) * z.array() * (1.0 - z.array());
            dGt.leftCols(H).array() = drh.array() * h_prev.array() * r.array() * (1.0 - r.array());
            dhp.noalias() += dGt.leftCols(2 * H) * Urz;
            dh_seq.middleRows(static_cast<Eigen::Index>(t - 1) * B, B) += dhp;
        } else {
            dGt.middleCols(H, H).array() = dh.array() * (-n.array()) * z.array() * (1.0 - z.array());
            dGt.leftCols(H).setZero();
        }
    }
    mat_of(dw, 3 * H, xs.F).noalias() = dG.transpose() * xs.m;
    vec_of(db) = dG.colwise().sum();
    Mat hprev = Mat::Zero(static_cast<Eigen::Index>(T) * B, H);
    for (int t = 1; t < T; ++t) hprev.middleRows(static_cast<Eigen::Index>(t) * B, B) = hs.step(t - 1);
    auto dU = mat_of(du, 3 * H, H);
    dU.topRows(2 * H).noalias() = dG.leftCols(2 * H).transpose() * hprev;
    dU.bottomRows(H).noalias() = dG.rightCols(H).transpose() * cc.rh;
    if (dxs) dxs->noalias() = dG * W;
}

// ------------------------------------------------------------------ layer params

std::string layer_prefix(int idx, LayerKind kind) {
    const char* tag = nullptr;
    switch (kind) {
        case LayerKind::Dense: tag = "dense"; break;
        case LayerKind::Conv1D: tag = "conv"; break;
        case LayerKind::LSTM: tag = "lstm"; break;
        case LayerKind::GRU: tag = "gru"; break;
        case LayerKind::BiLSTM: tag = "bilstm"; break;
    }
    return "L" + std::to_string(idx) + "." + tag;
}

struct Dims {
    std::vector<int> feats;  // features after each layer
    std::vector<int> lens;   // T after each layer
    int head_in = 0;
};

Dims stack_dims(int seq_len, int input_dim, const std::vector<LayerDesc>& layers, Readout readout) {
    Dims d;
    int F = input_dim, T = seq_len;
    for (const auto& l : layers) {
        if (l.units <= 0) throw RuntimeError("layer units must be positive");
        switch (l.kind) {
            case LayerKind::Dense: F = l.units; break;
            case LayerKind::Conv1D:
                if (l.kernel <= 0) throw RuntimeError("conv kernel must be positive");
                T = T - l.kernel + 1;
                if (T < 1) throw RuntimeError("conv stack shrinks the sequence below 1 step");
                F = l.units;
                break;
            case LayerKind::LSTM:
            case LayerKind::GRU: F = l.units; break;
            case LayerKind::BiLSTM: F = 2 * l.units; break;
        }
        d.feats.push_back(F);
        d.lens.push_back(T);
    }
    d.head_in = readout == Readout::Flatten ? T * F : F;
    return d;
}

}  // namespace

Network make_network(int seq_len, int input_dim, std::vector<LayerDesc> layers, Readout readout,
                     std::uint64_t seed) {
    if (seq_len <= 0 || input_dim <= 0) throw ConfigError("window dims must be positive");
    if (layers.empty()) throw ConfigError("network needs at least one layer");
    Network net;
    net.seq_len = seq_len;
    net.input_dim = input_dim;
    net.layers = std::move(layers);
    net.readout = readout;
    Dims d = stack_dims(seq_len, input_dim, net.layers, readout);
    net.step_features = d.feats;
    net.step_lengths = d.lens;
    net.head_in = d.head_in;

    int Fin = input_dim;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const auto& l = net.layers[i];
        const std::string p = layer_prefix(static_cast<int>(i), l.kind);
        const std::int64_t H = l.units;
        switch (l.kind) {
            case LayerKind::Dense:
                net.params.add(p + ".w", Tensor({H, Fin}));
                net.params.add(p + ".b", Tensor({H}));
                break;
            case LayerKind::Conv1D:
                net.params.add(p + ".w", Tensor({H, l.kernel, Fin}));
                net.params.add(p + ".b", Tensor({H}));
                break;
            case LayerKind::LSTM:
                net.params.add(p + ".w", Tensor({4 * H, Fin}));
                net.params.add(p + ".u", Tensor({4 * H, H}));
                net.params.add(p + ".b", Tensor({4 * H}));
                break;
            case LayerKind::GRU:
                net.params.add(p + ".w", Tensor({3 * H, Fin}));
                net.params.add(p + ".u", Tensor({3 * H, H}));
                net.params.add(p + ".b", Tensor({3 * H}));
                break;
            case LayerKind::BiLSTM:
                for (const char* dir : {".fw", ".bw"}) {
                    net.params.add(p + dir + ".w", Tensor({4 * H, Fin}));
                    net.params.add(p + dir + ".u", Tensor({4 * H, H}));
                    net.params.add(p + dir + ".b", Tensor({4 * H}));
                }
                break;
        }
        Fin = net.step_features[i];
    }
    net.params.add("head.w", Tensor({1, net.head_in}));
    net.params.add("head.b", Tensor({1}));

    // Init: uniform(-s, s), s = 1/sqrt(fan_in); recurrent layers use the
    // hidden size as fan-in for all of w/u/b (dense/conv biases share their
    // weight's scale). One sequential stream in insertion order.
    Rng rng(seed);
    Fin = input_dim;
    std::size_t entry = 0;
    auto fill_entries = [&](int n, double s) {
        for (int k = 0; k < n; ++k) {
            auto& vals = net.params.entries()[entry++].value.values();
            for (auto& v : vals) v = rng.uniform(-s, s);
        }
    };
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const auto& l = net.layers[i];
        switch (l.kind) {
            case LayerKind::Dense: fill_entries(2, 1.0 / std::sqrt(double(Fin))); break;
            case LayerKind::Conv1D: fill_entries(2, 1.0 / std::sqrt(double(l.kernel) * Fin)); break;
            case LayerKind::LSTM:
            case LayerKind::GRU: fill_entries(3, 1.0 / std::sqrt(double(l.units))); break;
            case LayerKind::BiLSTM: fill_entries(6, 1.0 / std::sqrt(double(l.units))); break;
        }
        Fin = net.step_features[i];
    }
    fill_entries(2, 1.0 / std::sqrt(double(net.head_in)));
    return net;
}

namespace {

Pass run_forward(const Network& net, std::span<const double* const> windows) {
    const int B = static_cast<int>(windows.size());
    if (B == 0) throw RuntimeError("forward: empty batch");
    Pass p;
    p.acts.reserve(net.layers.size() + 1);
    p.caches.resize(net.layers.size());

    Seq in(net.seq_len, B, net.input_dim);
    for (int b = 0; b < B; ++b)
        for (int t = 0; t < net.seq_len; ++t)
            in.step(t).row(b) = CVecMap(windows[b] + static_cast<std::ptrdiff_t>(t) * net.input_dim, net.input_dim).transpose();
    p.acts.push_back(std::move(in));

    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const auto& l = net.layers[i];
        const std::string pre = layer_prefix(static_cast<int>(i), l.kind);
        const Seq& xs = p.acts.back();
        Seq out(net.step_lengths[i], B, net.step_features[i]);
        switch (l.kind) {
            case LayerKind::Dense: {
                p.caches[i] = DenseCache{};
                dense_forward(xs, net.params.get(pre + ".w"), net.params.get(pre + ".b"), l.act, out);
                break;
            }
            case LayerKind::Conv1D: {
                ConvCache cc;
                conv_forward(xs, net.params.get(pre + ".w"), net.params.get(pre + ".b"), l.kernel, out, cc);
                p.caches[i] = std::move(cc);
                break;
            }
            case LayerKind::LSTM: {
                const int H = l.units;
                LstmCache cc;
                lstm_core_forward(xs, mat_of(net.params.get(pre + ".w"), 4 * H, xs.F),
                                  mat_of(net.params.get(pre + ".u"), 4 * H, H),
                                  vec_of(net.params.get(pre + ".b")), out, cc);
                p.caches[i] = std::move(cc);
                break;
            }
            case LayerKind::GRU: {
                GruCache cc;
                gru_forward(xs, net.params.get(pre + ".w"), net.params.get(pre + ".u"),
                            net.params.get(pre + ".b"), out, cc);
                p.caches[i] = std::move(cc);
                break;
            }
            case LayerKind::BiLSTM: {
                const int H = l.units, T = xs.T;
                BiCache cc;
                cc.hs_fw = Seq(T, B, H);
                cc.hs_bw_proc = Seq(T, B, H);
                cc.xs_rev = Seq(T, B, xs.F);
                for (int t = 0; t < T; ++t) cc.xs_rev.step(t) = xs.step(T - 1 - t);
                lstm_core_forward(xs, mat_of(net.params.get(pre + ".fw.w"), 4 * H, xs.F),
                                  mat_of(net.params.get(pre + ".fw.u"), 4 * H, H),
                                  vec_of(net.params.get(pre + ".fw.b")), cc.hs_fw, cc.fw);
                lstm_core_forward(cc.xs_rev, mat_of(net.params.get(pre + ".bw.w"), 4 * H, xs.F),
                                  mat_of(net.params.get(pre + ".bw.u"), 4 * H, H),
                                  vec_of(net.params.get(pre + ".bw.b")), cc.hs_bw_proc, cc.bw);
                for (int t = 0; t < T; ++t) {
                    out.step(t).leftCols(H) = cc.hs_fw.step(t);
                    out.step(t).rightCols(H) = cc.hs_bw_proc.step(T - 1 - t);
                }
                p.caches[i] = std::move(cc);
                break;
            }
        }
        p.acts.push_back(std::move(out));
    }

    const Seq& last = p.acts.back();
    p.head_in.resize(B, net.head_in);
    if (net.readout == Readout::Flatten) {
        for (int t = 0; t < last.T; ++t) p.head_in.middleCols(static_cast<Eigen::Index>(t) * last.F, last.F) = last.step(t);
    } else if (!net.layers.empty() && net.layers.back().kind == LayerKind::BiLSTM) {
        const int H = net.layers.back().units;
        p.head_in.leftCols(H) = last.step(last.T - 1).leftCols(H);    // fwd final state
        p.head_in.rightCols(H) = last.step(0).rightCols(H);           // bwd final state
    } else {
        p.head_in = last.step(last.T - 1);
    }
    auto hw = mat_of(net.params.get("head.w"), 1, net.head_in);
    p.preds.noalias() = p.head_in * hw.transpose();
    p.preds.array() += net.params.get("head.b")[0];
    return p;
}

// dpred -> parameter grads (+ optional input grads).
void run_backward(const Network& net, const Pass& p, const Vec& dpred, ParameterSet& grads, Tensor* input_grad) {
    const int B = static_cast<int>(dpred.size());
    auto hw = mat_of(net.params.get("head.w"), 1, net.head_in);
    mat_of(grads.get("head.w"), 1, net.head_in).noalias() = dpred.transpose() * p.head_in;
    grads.get("head.b")[0] = dpred.sum();

    const Seq& last = p.acts.back();
    Mat dseq = Mat::Zero(last.m.rows(), last.m.cols());
    Mat dhead = dpred * hw;  // B x head_in
    if (net.readout == Readout::Flatten) {
        for (int t = 0; t < last.T; ++t)
            dseq.middleRows(static_cast<Eigen::Index>(t) * B, B) = dhead.middleCols(static_cast<Eigen::Index>(t) * last.F, last.F);
    } else if (net.layers.back().kind == LayerKind::BiLSTM) {
        const int H = net.layers.back().units;
        dseq.middleRows(static_cast<Eigen::Index>(last.T - 1) * B, B).leftCols(H) = dhead.leftCols(H);
        dseq.topRows(B).rightCols(H) = dhead.rightCols(H);
    } else {
        dseq.middleRows(static_cast<Eigen::Index>(last.T - 1) * B, B) = dhead;
    }

    for (int i = static_cast<int>(net.layers.size()) - 1; i >= 0; --i) {
        const auto& l = net.layers[static_cast<std::size_t>(i)];
        const std::string pre = layer_prefix(i, l.kind);
        const Seq& xs = p.acts[static_cast<std::size_t>(i)];
        const Seq& out = p.acts[static_cast<std::size_t>(i) + 1];
        const bool want_dx = i > 0 || input_grad != nullptr;
        Mat dprev;
        if (want_dx) dprev.resize(xs.m.rows(), xs.m.cols());
        switch (l.kind) {
            case LayerKind::Dense:
                dense_backward(xs, net.params.get(pre + ".w"), l.act, out, dseq,
                               grads.get(pre + ".w"), grads.get(pre + ".b"), want_dx ? &dprev : nullptr);
                break;
            case LayerKind::Conv1D:
                conv_backward(xs, net.params.get(pre + ".w"), l.kernel, out,
                              std::get<ConvCache>(p.caches[static_cast<std::size_t>(i)]), dseq,
                              grads.get(pre + ".w"), grads.get(pre + ".b"), want_dx ? &dprev : nullptr);
                break;
            case LayerKind::LSTM: {
                const int H = l.units;
                lstm_core_backward(xs, mat_of(net.params.get(pre + ".w"), 4 * H, xs.F),
                                   mat_of(net.params.get(pre + ".u"), 4 * H, H), out,
                                   std::get<LstmCache>(p.caches[static_cast<std::size_t>(i)]), dseq,
                                   want_dx ? &dprev : nullptr,
                                   mat_of(grads.get(pre + ".w"), 4 * H, xs.F),
                                   mat_of(grads.get(pre + ".u"), 4 * H, H), vec_of(grads.get(pre + ".b")));
                break;
            }
            case LayerKind::GRU:
                gru_backward(xs, net.params.get(pre + ".w"), net.params.get(pre + ".u"), out,
                             std::get<GruCache>(p.caches[static_cast<std::size_t>(i)]), dseq,
                             want_dx ? &dprev : nullptr, grads.get(pre + ".w"), grads.get(pre + ".u"),
                             grads.get(pre + ".b"));
                break;
            case LayerKind::BiLSTM: {
                const int H = l.units, T = xs.T;
                const auto& cc = std::get<BiCache>(p.caches[static_cast<std::size_t>(i)]);
                Mat dh_fw(static_cast<Eigen::Index>(T) * B, H), dh_bw(static_cast<Eigen::Index>(T) * B, H);
                for (int t = 0; t < T; ++t) {
                    dh_fw.middleRows(static_cast<Eigen::Index>(t) * B, B) =
                        dseq.middleRows(static_cast<Eigen::Index>(t) * B, B).leftCols(H);
                    dh_bw.middleRows(static_cast<Eigen::Index>(t) * B, B) =
                        dseq.middleRows(static_cast<Eigen::Index>(T - 1 - t) * B, B).rightCols(H);
                }
                Mat dx_fw, dx_bw;
                if (want_dx) {
                    dx_fw.resize(xs.m.rows(), xs.m.cols());
                    dx_bw.resize(xs.m.rows(), xs.m.cols());
                }
                lstm_core_backward(xs, mat_of(net.params.get(pre + ".fw.w"), 4 * H, xs.F),
                                   mat_of(net.params.get(pre + ".fw.u"), 4 * H, H), cc.hs_fw, cc.fw, dh_fw,
                                   want_dx ? &dx_fw : nullptr,
                                   mat_of(grads.get(pre + ".fw.w"), 4 * H, xs.F),
                                   mat_of(grads.get(pre + ".fw.u"), 4 * H, H),
                                   vec_of(grads.get(pre + ".fw.b")));
                lstm_core_backward(cc.xs_rev, mat_of(net.params.get(pre + ".bw.w"), 4 * H, xs.F),
                                   mat_of(net.params.get(pre + ".bw.u"), 4 * H, H), cc.hs_bw_proc, cc.bw, dh_bw,
                                   want_dx ? &dx_bw : nullptr,
                                   mat_of(grads.get(pre + ".bw.w"), 4 * H, xs.F),
                                   mat_of(grads.get(pre + ".bw.u"), 4 * H, H),
                                   vec_of(grads.get(pre + ".bw.b")));
                if (want_dx)
                    for (int t = 0; t < T; ++t)
                        dprev.middleRows(static_cast<Eigen::Index>(t) * B, B) =
                            dx_fw.middleRows(static_cast<Eigen::Index>(t) * B, B) +
                            dx_bw.middleRows(static_cast<Eigen::Index>(T - 1 - t) * B, B);
                break;
            }
        }
        dseq = std::move(dprev);
    }

    if (input_grad) {
        if (B != 1) throw RuntimeError("input gradients are only produced on the per-sample path");
        *input_grad = Tensor({net.seq_len, net.input_dim});
        for (int t = 0; t < net.seq_len; ++t)
            VecMap(input_grad->data() + static_cast<std::ptrdiff_t>(t) * net.input_dim, net.input_dim) =
                dseq.row(t).transpose();
    }
}

void check_window(const Network& net, const Tensor& window) {
    if (window.rank() != 2 || window.dim(0) != net.seq_len || window.dim(1) != net.input_dim)
        throw ConfigError("window shape " + window.shape_str() + " does not match network input [" +
                          std::to_string(net.seq_len) + "x" + std::to_string(net.input_dim) + "]");
    if (!window.all_finite()) throw RuntimeError("window contains non-finite values");
}

}  // namespace

double forward(const Network& net, const Tensor& window) {
    check_window(net, window);
    const double* ptr = window.data();
    Pass p = run_forward(net, std::span<const double* const>(&ptr, 1));
    return p.preds[0];
}

std::vector<double> forward_batch(const Network& net, std::span<const double* const> windows) {
    Pass p = run_forward(net, windows);
    return std::vector<double>(p.preds.data(), p.preds.data() + p.preds.size());
}

double mse_loss(std::span<const double> preds, std::span<const double> labels) {
    if (preds.size() != labels.size() || preds.empty())
        throw RuntimeError("mse_loss: size mismatch or empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double d = preds[i] - labels[i];
        acc += d * d;
    }
    return acc / static_cast<double>(preds.size());
}

GradientBundle gradients(const Network& net, const Tensor& window, double label) {
    check_window(net, window);
    if (!std::isfinite(label)) throw RuntimeError("label must be finite");
    const double* ptr = window.data();
    Pass p = run_forward(net, std::span<const double* const>(&ptr, 1));
    Vec dpred(1);
    dpred[0] = 2.0 * (p.preds[0] - label);
    GradientBundle gb;
    gb.param_grads = net.params.zeros_like();
    run_backward(net, p, dpred, gb.param_grads, &gb.input_grad);
    return gb;
}

double batch_loss_grad(const Network& net, std::span<const double* const> windows,
                       std::span<const double> labels, ParameterSet& grads) {
    if (windows.size() != labels.size() || windows.empty())
        throw RuntimeError("batch_loss_grad: size mismatch or empty batch");
    Pass p = run_forward(net, windows);
    const auto B = static_cast<Eigen::Index>(windows.size());
    Vec dpred(B);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < B; ++i) {
        const double d = p.preds[i] - labels[static_cast<std::size_t>(i)];
        loss += d * d;
        dpred[i] = 2.0 * d / static_cast<double>(B);
    }
    if (!grads.same_layout(net.params)) grads = net.params.zeros_like();
    run_backward(net, p, dpred, grads, nullptr);
    return loss / static_cast<double>(B);
}

std::string layer_summary(const Network& net) {
    std::ostringstream os;
    os << "input [" << net.seq_len << "x" << net.input_dim << "]";
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const auto& l = net.layers[i];
        os << " -> ";
        switch (l.kind) {
            case LayerKind::Dense: os << "dense(" << l.units << ")"; break;
            case LayerKind::Conv1D: os << "conv1d(" << l.units << ",k" << l.kernel << ")"; break;
            case LayerKind::LSTM: os << "lstm(" << l.units << ")"; break;
            case LayerKind::GRU: os << "gru(" << l.units << ")"; break;
            case LayerKind::BiLSTM: os << "bilstm(" << l.units << ")"; break;
        }
    }
    os << " -> head(" << net.head_in << "->1), " << net.params.scalar_count() << " params";
    return os.str();
}

}  // namespace rulkit
