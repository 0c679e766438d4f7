#pragma once

#include <stdexcept>
#include <string>

namespace fedstress {

// Bad user-supplied configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/parameter shape disagreement.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed binary file (bad magic, version, truncation).
struct FormatError : std::runtime_error {
    FormatError(const std::string& msg, size_t byte_offset)
        : std::runtime_error(msg + " (at byte offset " + std::to_string(byte_offset) + ")"),
          offset(byte_offset) {}
    size_t offset;
};

// Well-formed file whose content violates a data invariant.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Violated operation precondition (degenerate variance, out-of-range input, ...).
struct PreconditionError : std::runtime_error {
    explicit PreconditionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Failure while executing an experiment (non-finite loss, empty client, ...).
struct RuntimeFailure : std::runtime_error {
    explicit RuntimeFailure(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace fedstress
