#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "rulkit/errors.hpp"
#include "rulkit/gradcheck.hpp"
#include "rulkit/network.hpp"
#include "rulkit/rng.hpp"

using namespace rulkit;

namespace {

Network tiny_linear() {
    // pred = head_w * (dense_w * x): one feature, one step, no activation
    Network net = make_network(1, 1, {{LayerKind::Dense, 1, 0, Activation::None}}, Readout::LastState, 1);
    net.params.get("L0.dense.w")[0] = 2.0;
    net.params.get("L0.dense.b")[0] = 0.0;
    net.params.get("head.w")[0] = 1.0;
    net.params.get("head.b")[0] = 0.0;
    return net;
}

Tensor rand_window(Rng& rng, int T, int F) {
    dvec v(static_cast<std::size_t>(T) * F);
    for (double& x : v) x = rng.uniform();
    return Tensor({T, F}, std::move(v));
}

}  // namespace

TEST_CASE("hand-computed gradients on a scalar linear chain") {
    Network net = tiny_linear();
    const Tensor x({1, 1}, {1.0});
    CHECK(forward(net, x) == doctest::Approx(2.0));
    const GradientBundle gb = gradients(net, x, 0.0);
    // J = (2x - 0)^2 = 4;  dJ/dx = 2*pred*2 = 8
    CHECK(gb.input_grad[0] == doctest::Approx(8.0));
    CHECK(gb.param_grads.get("L0.dense.w")[0] == doctest::Approx(4.0));   // 2*pred*head_w*x
    CHECK(gb.param_grads.get("L0.dense.b")[0] == doctest::Approx(4.0));
    CHECK(gb.param_grads.get("head.w")[0] == doctest::Approx(8.0));       // 2*pred*(w*x)
    CHECK(gb.param_grads.get("head.b")[0] == doctest::Approx(4.0));
}

TEST_CASE("mse_loss known values") {
    const std::vector<double> preds{0.0, 0.0}, labels{2.0, 4.0};
    CHECK(mse_loss(preds, labels) == doctest::Approx(10.0));
    CHECK(mse_loss(std::vector<double>{3.0}, std::vector<double>{3.0}) == doctest::Approx(0.0));
}

TEST_CASE("finite differences agree for every layer kind") {
    struct Case {
        const char* name;
        int T, F;
        std::vector<LayerDesc> layers;
        Readout readout;
    };
    const Case cases[] = {
        {"dense tanh", 4, 3, {{LayerKind::Dense, 5, 0, Activation::Tanh}}, Readout::LastState},
        {"dense sigmoid", 3, 2, {{LayerKind::Dense, 4, 0, Activation::Sigmoid}}, Readout::LastState},
        {"conv relu", 12, 3, {{LayerKind::Conv1D, 4, 5, Activation::None}}, Readout::Flatten},
        {"lstm", 5, 3, {{LayerKind::LSTM, 4, 0, Activation::None}}, Readout::LastState},
        {"gru", 5, 3, {{LayerKind::GRU, 4, 0, Activation::None}}, Readout::LastState},
        {"bilstm", 5, 3, {{LayerKind::BiLSTM, 3, 0, Activation::None}}, Readout::LastState},
        {"conv+gru stack", 11, 3, {{LayerKind::Conv1D, 4, 5, Activation::None}, {LayerKind::GRU, 4, 0, Activation::None}}, Readout::LastState},
        {"lstm deep", 4, 2, {{LayerKind::LSTM, 3, 0, Activation::None}, {LayerKind::LSTM, 3, 0, Activation::None}}, Readout::LastState},
        {"conv stack flatten", 14, 2, {{LayerKind::Conv1D, 3, 5, Activation::None}, {LayerKind::Conv1D, 2, 5, Activation::None}}, Readout::Flatten},
        {"gru+dense", 5, 3, {{LayerKind::GRU, 4, 0, Activation::None}, {LayerKind::Dense, 3, 0, Activation::ReLU}}, Readout::LastState},
    };
    Rng rng(2024);
    for (const Case& c : cases) {
        CAPTURE(c.name);
        Network net = make_network(c.T, c.F, c.layers, c.readout, 11);
        const Tensor x = rand_window(rng, c.T, c.F);
        CHECK(finite_diff_check(net, x, 42.0) < 1e-5);
    }
}

TEST_CASE("gradients are deterministic and do not mutate the network") {
    Network net = make_network(6, 3, {{LayerKind::GRU, 5, 0, Activation::None}}, Readout::LastState, 5);
    Rng rng(8);
    const Tensor x = rand_window(rng, 6, 3);
    const std::vector<double> before = net.params.flatten();
    const GradientBundle a = gradients(net, x, 30.0);
    const GradientBundle b = gradients(net, x, 30.0);
    CHECK(a.input_grad == b.input_grad);
    CHECK(a.param_grads == b.param_grads);
    CHECK(net.params.flatten() == before);
    CHECK(a.input_grad.same_shape(x));
}

TEST_CASE("batched forward matches the per-sample path") {
    Network net = make_network(7, 4, {{LayerKind::LSTM, 6, 0, Activation::None}}, Readout::LastState, 9);
    Rng rng(10);
    std::vector<Tensor> xs;
    for (int i = 0; i < 5; ++i) xs.push_back(rand_window(rng, 7, 4));
    std::vector<const double*> ptrs;
    for (const Tensor& t : xs) ptrs.push_back(t.data());
    const std::vector<double> batched = forward_batch(net, ptrs);
    REQUIRE(batched.size() == xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i)
        CHECK(batched[i] == doctest::Approx(forward(net, xs[i])).epsilon(1e-12));
}

TEST_CASE("batch gradient is the mean of per-sample gradients") {
    Network net = make_network(5, 3, {{LayerKind::GRU, 4, 0, Activation::None}}, Readout::LastState, 3);
    Rng rng(12);
    std::vector<Tensor> xs;
    std::vector<double> labels;
    for (int i = 0; i < 3; ++i) {
        xs.push_back(rand_window(rng, 5, 3));
        labels.push_back(rng.uniform(0.0, 100.0));
    }
    std::vector<const double*> ptrs;
    for (const Tensor& t : xs) ptrs.push_back(t.data());
    ParameterSet grads = net.params.zeros_like();
    const double loss = batch_loss_grad(net, ptrs, labels, grads);

    std::vector<double> preds;
    for (const Tensor& t : xs) preds.push_back(forward(net, t));
    CHECK(loss == doctest::Approx(mse_loss(preds, labels)).epsilon(1e-12));

    std::vector<double> mean(static_cast<std::size_t>(net.params.scalar_count()), 0.0);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const auto g = gradients(net, xs[i], labels[i]).param_grads.flatten();
        for (std::size_t k = 0; k < g.size(); ++k) mean[k] += g[k] / static_cast<double>(xs.size());
    }
    const std::vector<double> got = grads.flatten();
    for (std::size_t k = 0; k < got.size(); ++k) CHECK(got[k] == doctest::Approx(mean[k]).epsilon(1e-9));
}

TEST_CASE("seeded init is reproducible and respects the fan-in bound") {
    Network a = make_network(8, 5, {{LayerKind::LSTM, 7, 0, Activation::None}}, Readout::LastState, 77);
    Network b = make_network(8, 5, {{LayerKind::LSTM, 7, 0, Activation::None}}, Readout::LastState, 77);
    Network c = make_network(8, 5, {{LayerKind::LSTM, 7, 0, Activation::None}}, Readout::LastState, 78);
    CHECK(a.params == b.params);
    CHECK(!(a.params == c.params));
    const double bound = 1.0 / std::sqrt(7.0);  // recurrent fan-in = hidden size
    for (double v : a.params.get("L0.lstm.u").values()) {
        CHECK(v <= bound);
        CHECK(v >= -bound);
    }
}

TEST_CASE("window validation") {
    Network net = make_network(4, 3, {{LayerKind::Dense, 2, 0, Activation::Tanh}}, Readout::LastState, 1);
    CHECK_THROWS_AS((forward(net, Tensor({3, 3}, dvec(9, 0.0)))), ConfigError);
    CHECK_THROWS_AS((forward(net, Tensor({4, 2}, dvec(8, 0.0)))), ConfigError);
    Tensor bad({4, 3}, dvec(12, 0.0));
    bad[5] = std::numeric_limits<double>::infinity();
    CHECK_THROWS(forward(net, bad));
}

TEST_CASE("conv stack shortens time and the flatten head sees all steps") {
    Network net = make_network(12, 3, {{LayerKind::Conv1D, 4, 5, Activation::None}}, Readout::Flatten, 2);
    CHECK(net.step_lengths.back() == 8);  // 12 - 5 + 1
    CHECK(net.head_in == 8 * 4);
    // too-short window for the kernel stack must be rejected at build time
    CHECK_THROWS(make_network(4, 3, {{LayerKind::Conv1D, 4, 5, Activation::None}}, Readout::Flatten, 2));
}
