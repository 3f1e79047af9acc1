#pragma once

#include <stdexcept>
#include <string>

namespace interdiff {

// Tensor/frame-count mismatches; message names expected vs actual.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration value (T < 2, non-positive threshold, ...).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// 6D rotation input whose Gram-Schmidt is degenerate.
struct DegenerateRotationError : std::runtime_error {
    explicit DegenerateRotationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed sequence/config file.
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// File carries a version tag this build does not understand.
struct VersionError : std::runtime_error {
    explicit VersionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite loss or a denoiser contract violation during training.
struct TrainingError : std::runtime_error {
    explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

// Scenario parameters that cannot be realized.
struct GenerationError : std::runtime_error {
    explicit GenerationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Operation requested in a mode where it is undefined (e.g. Pene on skeletal HOIs).
struct NotApplicableError : std::runtime_error {
    explicit NotApplicableError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace interdiff
