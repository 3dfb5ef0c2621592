#include "rulkit/optim.hpp"

#include <cmath>

#include "rulkit/errors.hpp"

namespace rulkit {

void sgd_update(ParameterSet& params, const ParameterSet& grads, double lr) {
    if (!params.same_layout(grads)) throw RuntimeError("sgd_update: layout mismatch");
    for (std::size_t e = 0; e < params.entries().size(); ++e) {
        auto& p = params.entries()[e].value.values();
        const auto& g = grads.entries()[e].value.values();
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
    }
}

AdamState AdamState::init(const ParameterSet& params) {
    AdamState s;
    s.m = params.zeros_like();
    s.v = params.zeros_like();
    return s;
}

void adam_update(ParameterSet& params, const ParameterSet& grads, AdamState& state, double lr) {
    if (!params.same_layout(grads)) throw RuntimeError("adam_update: layout mismatch");
    state.t += 1;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t e = 0; e < params.entries().size(); ++e) {
        auto& p = params.entries()[e].value.values();
        const auto& g = grads.entries()[e].value.values();
        auto& m = state.m.entries()[e].value.values();
        auto& v = state.v.entries()[e].value.values();
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.eps);
        }
    }
}

}  // namespace rulkit
