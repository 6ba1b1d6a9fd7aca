#pragma once

#include <stdexcept>
#include <string>

namespace katolab {

// Invalid user-facing input: grid sizes, config files, out-of-range indices.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// A numerical guarantee failed at runtime: solver residual above tolerance,
// CFL violation, NaN in an integration state, unresolved boundary strip.
struct NumericsError : std::runtime_error {
    explicit NumericsError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace katolab
