#pragma once

#include <stdexcept>
#include <string>

namespace mvot {

// Base for everything thrown by the library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/weight extents do not line up.
struct DimensionError : Error {
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// Degenerate or out-of-domain box geometry.
struct GeometryError : Error {
    explicit GeometryError(const std::string& msg) : Error(msg) {}
};

// Malformed file contents (weights, ground truth, frames).
struct FormatError : Error {
    explicit FormatError(const std::string& msg) : Error(msg) {}
};

// Invalid argument value (empty batch, bad generation parameters, index out of range).
struct ArgumentError : Error {
    explicit ArgumentError(const std::string& msg) : Error(msg) {}
};

// Operation not valid in the current state (no targets, empty history).
struct StateError : Error {
    explicit StateError(const std::string& msg) : Error(msg) {}
};

// Target registry misuse (duplicate or unknown id).
struct RegistryError : Error {
    explicit RegistryError(const std::string& msg) : Error(msg) {}
};

// Filesystem failure.
struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace mvot
