#include "rulkit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "rulkit/errors.hpp"

namespace rulkit {

namespace {
std::size_t checked_count(const std::vector<std::int64_t>& shape) {
    if (shape.empty() || shape.size() > 3)
        throw ConfigError("tensor rank must be 1..3, got " + std::to_string(shape.size()));
    std::int64_t n = 1;
    for (std::int64_t d : shape) {
        if (d <= 0) throw ConfigError("tensor dims must be positive");
        n *= d;
    }
    return static_cast<std::size_t>(n);
}
}  // namespace

Tensor::Tensor(std::vector<std::int64_t> shape) : shape_(std::move(shape)), data_(checked_count(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::int64_t> shape, dvec values) : shape_(std::move(shape)), data_(std::move(values)) {
    if (checked_count(shape_) != data_.size())
        throw ConfigError("tensor shape " + shape_str() + " does not match " + std::to_string(data_.size()) + " values");
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Tensor::max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ConfigError("max_abs_diff: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    double m = 0.0;
    for (std::size_t i = 0; i < a.data_.size(); ++i) m = std::max(m, std::fabs(a.data_[i] - b.data_[i]));
    return m;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
    os << ']';
    return os.str();
}

}  // namespace rulkit
