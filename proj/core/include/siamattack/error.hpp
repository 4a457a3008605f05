#pragma once

#include <stdexcept>
#include <string>

namespace siam {

// Error taxonomy shared across the toolkit. Everything derives from
// std::runtime_error so callers can catch broadly or by kind.

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("invalid config: " + msg) {}
};

struct InvalidBoxError : std::runtime_error {
    explicit InvalidBoxError(const std::string& msg) : std::runtime_error("invalid box: " + msg) {}
};

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape mismatch: " + msg) {}
};

struct ConditioningError : std::runtime_error {
    explicit ConditioningError(const std::string& msg) : std::runtime_error("conditioning: " + msg) {}
};

struct InvalidTargetError : std::runtime_error {
    explicit InvalidTargetError(const std::string& msg) : std::runtime_error("invalid target: " + msg) {}
};

struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error("parse error: " + msg) {}
};

struct TrainingError : std::runtime_error {
    explicit TrainingError(const std::string& msg) : std::runtime_error("training error: " + msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

}  // namespace siam
