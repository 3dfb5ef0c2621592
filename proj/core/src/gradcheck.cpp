#include "rulkit/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace rulkit {

namespace {
double objective(const Network& net, const Tensor& window, double label) {
    const double d = forward(net, window) - label;
    return d * d;
}

double rel_err(double a, double n) {
    return std::fabs(a - n) / std::max({1.0, std::fabs(a), std::fabs(n)});
}
}  // namespace

double finite_diff_check(const Network& net, const Tensor& window, double label, double step) {
    const GradientBundle gb = gradients(net, window, label);
    double worst = 0.0;

    Network probe = net;  // deep copy; the original stays untouched
    for (auto& entry : probe.params.entries()) {
        const Tensor& analytic = gb.param_grads.get(entry.name);
        auto& vals = entry.value.values();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double keep = vals[i];
            vals[i] = keep + step;
            const double up = objective(probe, window, label);
            vals[i] = keep - step;
            const double dn = objective(probe, window, label);
            vals[i] = keep;
            worst = std::max(worst, rel_err(analytic[static_cast<std::int64_t>(i)], (up - dn) / (2.0 * step)));
        }
    }

    Tensor x = window;
    for (std::int64_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + step;
        const double up = objective(net, x, label);
        x[i] = keep - step;
        const double dn = objective(net, x, label);
        x[i] = keep;
        worst = std::max(worst, rel_err(gb.input_grad[i], (up - dn) / (2.0 * step)));
    }
    return worst;
}

}  // namespace rulkit
