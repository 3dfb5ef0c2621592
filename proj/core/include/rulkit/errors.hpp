#pragma once

#include <stdexcept>
#include <string>

namespace rulkit {

// Bad user input: malformed config, unknown keys, unusable CLI arguments.
// The CLI maps this family to exit code 1.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Anything that goes wrong after inputs were accepted: unreadable files,
// corrupt checkpoints, numerical blow-ups. The CLI maps this to exit code 2.
struct RuntimeError : std::runtime_error {
    explicit RuntimeError(const std::string& what) : std::runtime_error(what) {}
};

struct ParseError : RuntimeError {
    using RuntimeError::RuntimeError;
};

struct IoError : RuntimeError {
    using RuntimeError::RuntimeError;
};

}  // namespace rulkit
