#pragma once

#include <stdexcept>
#include <string>

namespace radsel {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual const char *kind() const noexcept { return "error"; }
};

/// Malformed arguments to an operation (dimension mismatch, bad ranges).
class InputError : public Error {
public:
    using Error::Error;
    const char *kind() const noexcept override { return "input_error"; }
};

/// Invalid experiment / training / ensemble configuration.
class ConfigError : public Error {
public:
    using Error::Error;
    const char *kind() const noexcept override { return "config_error"; }
};

/// Operation invoked in a state where it is undefined (e.g. no candidates left).
class StateError : public Error {
public:
    using Error::Error;
    const char *kind() const noexcept override { return "state_error"; }
};

/// Persistence failures: missing files, truncation, checksum or version mismatch.
class FormatError : public Error {
public:
    using Error::Error;
    const char *kind() const noexcept override { return "format_error"; }
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    using Error::Error;
    const char *kind() const noexcept override { return "divergence_error"; }
};

} // namespace radsel
