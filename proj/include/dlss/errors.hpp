/// @file errors.hpp
/// @brief Exception types raised by the dlss library.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dlss {

/// Base class for every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller bug: bad grid size, mismatched grids, unsupported option.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A state that must be strictly positive has a value <= 0 (or NaN).
class NonPositiveState : public Error {
public:
    NonPositiveState(std::size_t index, double value)
        : Error("non-positive state at index " + std::to_string(index) + " (value " +
                std::to_string(value) + ")"),
          index_(index), value_(value) {}

    std::size_t index() const noexcept { return index_; }
    double value() const noexcept { return value_; }

private:
    std::size_t index_;
    double value_;
};

/// Right-hand side of a singular elliptic solve is not in the range (mean-zero) space.
class NotMeanZero : public Error {
public:
    explicit NotMeanZero(double relative_mean)
        : Error("field is not mean-zero (relative mean " + std::to_string(relative_mean) + ")"),
          relative_mean_(relative_mean) {}

    double relative_mean() const noexcept { return relative_mean_; }

private:
    double relative_mean_;
};

/// Common base for the nonlinear/linear solver failures that substepping may recover from.
class SolverFailure : public Error {
public:
    using Error::Error;
};

class NoConvergence : public SolverFailure {
public:
    NoConvergence(int iterations, double residual, const std::string& what = "solver")
        : SolverFailure(what + " did not converge after " + std::to_string(iterations) +
                        " iterations (residual " + std::to_string(residual) + ")"),
          iterations_(iterations), residual_(residual) {}

    int iterations() const noexcept { return iterations_; }
    double residual() const noexcept { return residual_; }

private:
    int iterations_;
    double residual_;
};

class LineSearchStalled : public SolverFailure {
public:
    LineSearchStalled(int iteration, double residual)
        : SolverFailure("Newton line search stalled at iteration " + std::to_string(iteration) +
                        " (residual " + std::to_string(residual) + ")"),
          iteration_(iteration), residual_(residual) {}

    int iteration() const noexcept { return iteration_; }
    double residual() const noexcept { return residual_; }

private:
    int iteration_;
    double residual_;
};

class LinearSolveFailure : public SolverFailure {
public:
    using SolverFailure::SolverFailure;
};

/// A trajectory failed; carries the index of the step that could not be taken.
class RunFailure : public Error {
public:
    RunFailure(long step, double time, const std::string& cause)
        : Error("step " + std::to_string(step) + " at t=" + std::to_string(time) +
                " failed: " + cause),
          step_(step), time_(time) {}

    long step() const noexcept { return step_; }
    double time() const noexcept { return time_; }

private:
    long step_;
    double time_;
};

}  // namespace dlss
