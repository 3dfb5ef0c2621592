#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rulkit/tensor.hpp"

namespace rulkit {

// FNV-1a over raw bytes; used for payload integrity and manifest checksums.
std::uint64_t fnv1a64(std::span<const std::byte> bytes);
std::uint64_t fnv1a64_file(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);

// On-disk unit for checkpoints and windowed datasets: a JSON metadata object
// plus ordered named f64 arrays. Round-trips bit-exactly; loading verifies a
// payload checksum so truncation and bit-flips surface as errors instead of
// silently wrong numbers.
struct Container {
    std::string meta;  // JSON object text; "{}" when empty
    std::vector<std::pair<std::string, Tensor>> arrays;

    const Tensor& array(const std::string& name) const;
    bool has_array(const std::string& name) const;
};

void save_container(const std::filesystem::path& path, const Container& c);
Container load_container(const std::filesystem::path& path);

}  // namespace rulkit
