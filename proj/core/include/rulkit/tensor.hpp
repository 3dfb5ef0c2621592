#pragma once

#include <cstddef>
#include <cstdint>
#include <new>
#include <string>
#include <vector>

namespace rulkit {

// 64-byte-aligned storage for all numeric buffers. Results must be
// bit-reproducible no matter what the heap looked like when a buffer was
// allocated, and vectorized kernels (ours and Eigen's) pick code paths from
// the runtime pointer alignment; pinning every buffer to the widest SIMD
// alignment keeps those choices constant.
template <typename T>
struct AlignedAlloc {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAlloc() = default;
    template <typename U>
    AlignedAlloc(const AlignedAlloc<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

    template <typename U>
    bool operator==(const AlignedAlloc<U>&) const noexcept {
        return true;
    }
};

using dvec = std::vector<double, AlignedAlloc<double>>;

// Dense row-major f64 array, rank 1..3. All numeric state in the toolkit
// (weights, windows, gradients) lives in these; every producer is expected
// to keep values finite and there is a debug check for it.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::int64_t> shape);
    Tensor(std::vector<std::int64_t> shape, dvec values);

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    const std::vector<std::int64_t>& shape() const { return shape_; }
    std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
    std::int64_t dim(std::size_t i) const { return shape_[i]; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    dvec& values() { return data_; }
    const dvec& values() const { return data_; }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    double& at(std::int64_t r, std::int64_t c) { return data_[static_cast<std::size_t>(r * shape_[1] + c)]; }
    double at(std::int64_t r, std::int64_t c) const { return data_[static_cast<std::size_t>(r * shape_[1] + c)]; }

    void fill(double v);
    bool all_finite() const;
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    // max_i |a_i - b_i|; shapes must match.
    static double max_abs_diff(const Tensor& a, const Tensor& b);

    bool operator==(const Tensor& other) const { return shape_ == other.shape_ && data_ == other.data_; }

    std::string shape_str() const;

private:
    std::vector<std::int64_t> shape_;
    dvec data_;
};

}  // namespace rulkit
