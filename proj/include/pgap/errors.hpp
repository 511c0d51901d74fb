#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace pgap {

/// Invalid model parameter (p, tau, gamma, beta, ...).
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Point or region outside the set where a quantity is defined.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Inadmissible geometry, e.g. overlapping inclusions.
class GeometryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Linear algebra breakdown, eigen-solver failure, degenerate data.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Nonlinear iteration did not reach its tolerance; carries the history.
class ConvergenceError : public NumericError {
public:
    ConvergenceError(const std::string& what, std::vector<double> history)
        : NumericError(what), residual_history(std::move(history)) {}

    std::vector<double> residual_history;
};

/// Malformed configuration; `path` names the offending key.
class UsageError : public std::runtime_error {
public:
    UsageError(const std::string& path, const std::string& what)
        : std::runtime_error(path + ": " + what), path(path) {}

    std::string path;
};

} // namespace pgap
