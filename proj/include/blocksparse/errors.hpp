#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace blocksparse {

// Bad input: out-of-range parameters, malformed configuration, infeasible
// geometry. The CLI maps these to exit code 2.
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A computation that was well posed but did not succeed numerically.
// The CLI maps these to exit code 1.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class QuadratureError : public NumericalError {
public:
    QuadratureError(double estimate, double error_bound)
        : NumericalError("quadrature did not converge: estimate " + std::to_string(estimate)
                         + ", error bound " + std::to_string(error_bound)),
          estimate_(estimate),
          error_bound_(error_bound)
    {}

    double estimate() const noexcept { return estimate_; }
    double error_bound() const noexcept { return error_bound_; }

private:
    double estimate_;
    double error_bound_;
};

class BracketError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class DivergenceError : public NumericalError {
public:
    DivergenceError(std::size_t iteration, const std::string& what)
        : NumericalError(what + " (iteration " + std::to_string(iteration) + ")"),
          iteration_(iteration)
    {}

    std::size_t iteration() const noexcept { return iteration_; }

private:
    std::size_t iteration_;
};

} // namespace blocksparse
