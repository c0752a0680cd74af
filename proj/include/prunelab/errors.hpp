#pragma once

#include <stdexcept>
#include <string>

namespace prunelab {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration or rejected input (bad hyperparameter, shape mismatch, ...).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Malformed external file (IDX, dataset container, mask file, ...).
class FormatError : public Error {
public:
    explicit FormatError(const std::string& msg) : Error(msg) {}
};

// Non-finite value produced during computation. layer_index is -1 when the
// failure is not attributable to a specific layer.
class NumericError : public Error {
public:
    NumericError(const std::string& msg, int layer_index = -1)
        : Error(msg), layer_index(layer_index) {}
    int layer_index;
};

// API misuse (e.g. consuming a tape twice).
class UsageError : public Error {
public:
    explicit UsageError(const std::string& msg) : Error(msg) {}
};

// A required artifact (synthetic set, run record, ...) is missing on disk.
class ArtifactError : public Error {
public:
    explicit ArtifactError(const std::string& msg) : Error(msg) {}
};

}  // namespace prunelab
