#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "rulkit/tensor.hpp"

namespace rulkit {

// Ordered collection of named parameter arrays. Order is insertion order and
// is part of every contract built on top: the flattened view used by the
// optimizers, checkpoints, and the defense's parameter grouping is simply
// each array in insertion order, each one flattened row-major.
class ParameterSet {
public:
    struct Entry {
        std::string name;
        Tensor value;
    };

    bool has(const std::string& name) const { return index_.count(name) != 0; }
    std::size_t count() const { return entries_.size(); }

    Tensor& add(const std::string& name, Tensor value);
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;

    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<Entry>& entries() { return entries_; }

    // Total scalar count across all arrays.
    std::int64_t scalar_count() const;

    // Zero-filled copy with identical names/shapes/order.
    ParameterSet zeros_like() const;

    bool same_layout(const ParameterSet& other) const;

    std::vector<double> flatten() const;
    void assign_flat(const std::vector<double>& flat);

    bool operator==(const ParameterSet& other) const;

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Result of one reverse-mode sweep: dJ/dX plus dJ/dtheta with the exact
// layout of the network's ParameterSet.
struct GradientBundle {
    Tensor input_grad;
    ParameterSet param_grads;
};

}  // namespace rulkit
