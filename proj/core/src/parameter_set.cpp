#include "rulkit/parameter_set.hpp"

#include "rulkit/errors.hpp"

namespace rulkit {

Tensor& ParameterSet::add(const std::string& name, Tensor value) {
    if (has(name)) throw ConfigError("duplicate parameter name: " + name);
    index_[name] = entries_.size();
    entries_.push_back({name, std::move(value)});
    return entries_.back().value;
}

Tensor& ParameterSet::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return entries_[it->second].value;
}

const Tensor& ParameterSet::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return entries_[it->second].value;
}

std::int64_t ParameterSet::scalar_count() const {
    std::int64_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
}

ParameterSet ParameterSet::zeros_like() const {
    ParameterSet out;
    for (const auto& e : entries_) out.add(e.name, Tensor(e.value.shape()));
    return out;
}

bool ParameterSet::same_layout(const ParameterSet& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].name != other.entries_[i].name) return false;
        if (entries_[i].value.shape() != other.entries_[i].value.shape()) return false;
    }
    return true;
}

std::vector<double> ParameterSet::flatten() const {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(scalar_count()));
    for (const auto& e : entries_) flat.insert(flat.end(), e.value.values().begin(), e.value.values().end());
    return flat;
}

void ParameterSet::assign_flat(const std::vector<double>& flat) {
    if (static_cast<std::int64_t>(flat.size()) != scalar_count())
        throw ConfigError("assign_flat: size mismatch");
    std::size_t off = 0;
    for (auto& e : entries_) {
        auto& vals = e.value.values();
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                  flat.begin() + static_cast<std::ptrdiff_t>(off + vals.size()), vals.begin());
        off += vals.size();
    }
}

bool ParameterSet::operator==(const ParameterSet& other) const {
    if (!same_layout(other)) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i)
        if (!(entries_[i].value == other.entries_[i].value)) return false;
    return true;
}

}  // namespace rulkit
