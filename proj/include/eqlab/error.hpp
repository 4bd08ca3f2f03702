#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace eqlab {

// Bad arguments or configuration (shape mismatch, out-of-range values).
struct ParameterError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// An iterative numerical procedure failed (bisection, singular solve).
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Scoring failed, e.g. sequences that cannot be aligned.
struct EvaluationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// API misuse such as backpropagating through a detached graph.
struct UsageError : std::logic_error {
    using std::logic_error::logic_error;
};

// Training diverged or produced NaN. Carries the loss trace up to the failure.
struct TrainingError : std::runtime_error {
    TrainingError(const std::string& what, std::vector<double> trace_)
        : std::runtime_error(what), trace(std::move(trace_)) {}
    std::vector<double> trace;
};

} // namespace eqlab
