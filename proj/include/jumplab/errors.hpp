#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace jumplab {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition of an operation was violated (dimension mismatch,
/// nonpositive parameter, unsupported mode, ...).
class ContractViolation : public Error {
public:
    using Error::Error;
};

/// An operation declined to run because its standing assumptions do not
/// hold for the given inputs (e.g. a multiplicative coupling handed to the
/// Kolmogorov operator, or a mixing fit without a strict certificate).
class Refused : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent run configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// The implicit solver failed after exhausting its step halvings.
class NonConverged : public Error {
public:
    NonConverged(std::string what, double time, std::vector<double> state, double residual)
        : Error(std::move(what)), time_(time), state_(std::move(state)), residual_(residual) {}

    double time() const noexcept { return time_; }
    const std::vector<double>& state() const noexcept { return state_; }
    double residual() const noexcept { return residual_; }

private:
    double time_;
    std::vector<double> state_;
    double residual_;
};

namespace detail {

inline void require(bool ok, const std::string& msg) {
    if (!ok) throw ContractViolation(msg);
}

}  // namespace detail

}  // namespace jumplab
