#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace linthresh {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    DimensionError(const std::string& what, std::size_t expected, std::size_t actual)
        : Error(what + ": expected dimension " + std::to_string(expected) + ", got " +
                std::to_string(actual)),
          expected_(expected), actual_(actual) {}

    std::size_t expected() const noexcept { return expected_; }
    std::size_t actual() const noexcept { return actual_; }

private:
    std::size_t expected_;
    std::size_t actual_;
};

/// Invalid parameters: negative thresholds, step sizes outside the admissible range, ...
class ConfigError : public Error {
public:
    using Error::Error;
};

/// An iterative method ran out of budget. Carries the last estimate.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double last_estimate)
        : Error(what), last_estimate_(last_estimate) {}
    double last_estimate() const noexcept { return last_estimate_; }

private:
    double last_estimate_;
};

/// Non-finite values or a violated theoretical precondition at run time.
class NumericalError : public Error {
public:
    NumericalError(const std::string& what, std::size_t step)
        : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// A certificate cannot be built because its preconditions fail.
class CertificateError : public Error {
public:
    using Error::Error;
};

} // namespace linthresh
