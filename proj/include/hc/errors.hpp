#pragma once

#include <stdexcept>
#include <string>

namespace hc {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Missing or unreadable files, malformed on-disk formats.
class IoError : public Error {
public:
    using Error::Error;
};

/// Input data violates a structural invariant (index range, finiteness, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Inconsistent or infeasible configuration (budgets, schedule, flags).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Non-finite values, solver non-convergence.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Operation called outside its mathematical domain.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Evaluation could not be carried out (e.g. no supervision edges).
class EvaluationError : public Error {
public:
    using Error::Error;
};

/// Not enough candidates to draw a requested sample.
class SamplingError : public Error {
public:
    using Error::Error;
};

/// Reverse pass reached a primitive without a derivative rule.
class UnsupportedOpError : public Error {
public:
    using Error::Error;
};

}  // namespace hc
