#pragma once

#include <stdexcept>
#include <string>

namespace fourcrop {

// Failure categories map onto CLI exit codes:
//   2 config/usage, 3 data/IO, 4 numerical abort, 5 verification failure.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Dimension mismatch; message names the offending axis.
class ShapeError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

// Checkpoint self-description disagrees with what the caller expects.
class VersionError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Corrupt or truncated checkpoint file.
class ChecksumError : public DataError {
public:
    using DataError::DataError;
};

// NaN/Inf encountered where finite values are required.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A self-check (gradient check, acceptance probe) did not pass.
class VerificationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return 2;
    if (dynamic_cast<const DataError*>(&e)) return 3;
    if (dynamic_cast<const NumericalError*>(&e)) return 4;
    if (dynamic_cast<const VerificationError*>(&e)) return 5;
    return 1;
}

} // namespace fourcrop
