#pragma once

#include <stdexcept>
#include <string>

namespace slat {

/// Raised when a caller breaks an operation's precondition (dimension
/// mismatch, empty mixture, bad probability, unknown id, ...).
class ContractViolation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a numerical quantity cannot be computed reliably, e.g. an
/// innovation covariance that is singular or too badly conditioned.
class NumericalDegeneracy : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unknown vehicle / feature identifier.
class LookupError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw ContractViolation(message);
}

} // namespace slat
