#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>

namespace streamsparse {

/// Dimension mismatch between inputs (vector length, matrix shape).
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Argument outside its mathematical domain (negative threshold, non-finite input, ...).
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

/// Invalid or missing key in an experiment configuration. `key` names the offender.
struct ConfigError : std::runtime_error {
    std::string key;
    ConfigError(std::string key_, const std::string& msg)
        : std::runtime_error("config key '" + key_ + "': " + msg), key(std::move(key_)) {}
};

/// An iterate left the finite range (bad learning rate, degenerate data).
struct DivergenceError : std::runtime_error {
    long iteration = -1;
    long batch_index = -1;
    DivergenceError(const std::string& msg, long iteration_, long batch_index_ = -1)
        : std::runtime_error(msg + " (iteration " + std::to_string(iteration_) +
                             (batch_index_ >= 0 ? ", batch " + std::to_string(batch_index_) : "") + ")"),
          iteration(iteration_),
          batch_index(batch_index_) {}
};

/// Malformed checkpoint stream. Each failure mode is a distinct kind.
struct CheckpointError : std::runtime_error {
    enum class Kind { BadMagic, BadVersion, Truncated, DimensionOverflow };
    Kind kind;
    CheckpointError(Kind kind_, const std::string& msg) : std::runtime_error(msg), kind(kind_) {}
};

/// Newton solver failed to reach the requested tolerance; carries the last iterate.
struct ConvergenceError : std::runtime_error {
    Eigen::VectorXd last_iterate;
    ConvergenceError(const std::string& msg, Eigen::VectorXd last)
        : std::runtime_error(msg), last_iterate(std::move(last)) {}
};

/// Restricted Hessian numerically singular.
struct SingularError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Unparseable cell in an ingested CSV. Coordinates are 1-based (line, column).
struct IngestError : std::runtime_error {
    long row = 0;
    long col = 0;
    IngestError(long row_, long col_, const std::string& msg)
        : std::runtime_error(msg + " at row " + std::to_string(row_) + ", column " + std::to_string(col_)),
          row(row_),
          col(col_) {}
};

}  // namespace streamsparse
