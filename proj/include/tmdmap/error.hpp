#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tmdmap {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid argument or precondition violation (negative weights, bad sizes).
class DomainError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

/// A target measure that vanishes on every point (or on a whole kernel row).
class DegenerateMeasureError : public Error {
public:
    using Error::Error;
};

/// Sparse kernel would exceed the configured nonzero budget.
class CapacityError : public Error {
public:
    CapacityError(std::size_t requested, std::size_t budget)
        : Error("kernel needs " + std::to_string(requested) +
                " stored entries, budget is " + std::to_string(budget)),
          requested_(requested), budget_(budget) {}

    std::size_t requested() const noexcept { return requested_; }
    std::size_t budget() const noexcept { return budget_; }

private:
    std::size_t requested_;
    std::size_t budget_;
};

/// A Langevin trajectory left the finite region (|x| > 1e6).
class DivergenceError : public Error {
public:
    explicit DivergenceError(std::size_t step)
        : Error("trajectory diverged at step " + std::to_string(step)), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// Linear solver failed to reach the requested residual.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double residual)
        : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}

    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

/// Boundary sets that overlap or contain no sampled point.
class BoundaryError : public Error {
public:
    using Error::Error;
};

}  // namespace tmdmap
