#pragma once

#include <cstdint>

#include "rulkit/parameter_set.hpp"

namespace rulkit {

// theta <- theta - lr * grad. Layouts must match.
void sgd_update(ParameterSet& params, const ParameterSet& grads, double lr);

// Standard Adam with bias correction; the training default (plain SGD stays
// available and is what the one-update-per-epoch defense schedule uses).
struct AdamState {
    ParameterSet m, v;
    std::int64_t t = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    static AdamState init(const ParameterSet& params);
};

void adam_update(ParameterSet& params, const ParameterSet& grads, AdamState& state, double lr);

}  // namespace rulkit
