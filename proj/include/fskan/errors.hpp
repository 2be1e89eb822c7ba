#pragma once

#include <stdexcept>
#include <string>

namespace fskan {

// Bad shapes, malformed specs, unsupported configurations.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// A numeric verification failed (equivariance probe, conversion tolerance, ...).
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace fskan
