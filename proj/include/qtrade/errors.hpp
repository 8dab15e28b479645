#pragma once

#include <stdexcept>
#include <string>

namespace qtrade {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input text (CSV rows, config lines). Carries the 1-based line number.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Data that parsed but violates a domain invariant (OHLC envelope, ordering, spacing).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Timestamps out of order in loaded data.
class OrderingError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Bad argument to an operation (non-multiple frequency, oversized window, ...).
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Operation called in the wrong state (step after terminal, missing warm-up).
class StateError : public Error {
public:
    using Error::Error;
};

/// Contract misuse (e.g. pushing into a full replay buffer).
class UsageError : public Error {
public:
    using Error::Error;
};

/// Non-finite loss or gradient encountered during optimisation.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace qtrade
