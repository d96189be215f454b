#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rise {

/// Violated precondition: bad sizes, out-of-range arguments, misaligned inputs.
class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Two or more atoms placed at (numerically) the same point.
class DegenerateGeometryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// NaN/Inf encountered while evaluating or differentiating.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An explainer or the backbone trainer produced a non-finite loss.
class OptimizationError : public NumericError {
public:
    OptimizationError(const std::string& what, std::size_t step)
        : NumericError(what + " (step " + std::to_string(step) + ")"), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Corpus generation could not place atoms without overlap.
class GenerationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace rise
