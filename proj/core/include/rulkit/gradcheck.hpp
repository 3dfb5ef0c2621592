#pragma once

#include "rulkit/network.hpp"

namespace rulkit {

// Central-difference check of the reverse-mode sweep for J = (f(X) - y)^2.
// Perturbs every parameter scalar and every input coordinate by +/-step and
// returns the worst relative error |analytic - numeric| / max(1, |a|, |n|).
double finite_diff_check(const Network& net, const Tensor& window, double label, double step = 1e-5);

}  // namespace rulkit
