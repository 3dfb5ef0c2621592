#include <cmath>

#include "doctest.h"
#include "rulkit/optim.hpp"
#include "rulkit/tensor.hpp"

using namespace rulkit;

namespace {

ParameterSet single(double v) {
    ParameterSet p;
    p.add("w", Tensor({2}, {v, -v}));
    return p;
}

}  // namespace

TEST_CASE("sgd_update steps against the gradient") {
    ParameterSet p = single(1.0);
    ParameterSet g;
    g.add("w", Tensor({2}, {0.5, -2.0}));
    sgd_update(p, g, 0.1);
    CHECK(p.get("w")[0] == doctest::Approx(0.95));
    CHECK(p.get("w")[1] == doctest::Approx(-0.8));
}

TEST_CASE("adam first step is a signed move of roughly lr") {
    ParameterSet p = single(0.0);
    ParameterSet g;
    g.add("w", Tensor({2}, {3.0, -0.004}));
    AdamState st = AdamState::init(p);
    adam_update(p, g, st, 0.01);
    // m_hat/(sqrt(v_hat)+eps) == g/(|g|+eps') at t=1 -> ~sign(g)
    CHECK(p.get("w")[0] == doctest::Approx(-0.01).epsilon(1e-3));
    CHECK(p.get("w")[1] == doctest::Approx(0.01).epsilon(1e-3));
    CHECK(st.t == 1);
}

TEST_CASE("adam matches the reference recursion for a few steps") {
    ParameterSet p = single(0.5);
    AdamState st = AdamState::init(p);
    double m = 0.0, v = 0.0, w = 0.5;
    const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    for (int t = 1; t <= 5; ++t) {
        const double grad = 2.0 * w;  // d(w^2)/dw
        ParameterSet g;
        g.add("w", Tensor({2}, {grad, 0.0}));
        adam_update(p, g, st, lr);
        m = b1 * m + (1 - b1) * grad;
        v = b2 * v + (1 - b2) * grad * grad;
        const double mh = m / (1 - std::pow(b1, t));
        const double vh = v / (1 - std::pow(b2, t));
        w -= lr * mh / (std::sqrt(vh) + eps);
        CHECK(p.get("w")[0] == doctest::Approx(w).epsilon(1e-12));
    }
    // zero-gradient coordinate never moves
    CHECK(p.get("w")[1] == doctest::Approx(-0.5));
}
