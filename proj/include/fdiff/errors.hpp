#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fdiff {

/// Inconsistent or out-of-range input parameters.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A simulated state left the finite range (any |coordinate| above the
/// divergence threshold, or NaN).
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, std::size_t step, double time)
        : std::runtime_error(what + " (step " + std::to_string(step) + ", t=" + std::to_string(time) + ")"),
          step_(step), time_(time) {}

    std::size_t step() const noexcept { return step_; }
    double time() const noexcept { return time_; }

private:
    std::size_t step_;
    double time_;
};

/// An analysis could not produce a result from valid input, e.g. no rhythm.
class AnalysisError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An iterative method stopped before reaching its tolerance.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double residual)
        : std::runtime_error(what + " (last residual " + std::to_string(residual) + ")"), residual_(residual) {}

    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace fdiff
