#pragma once

#include <stdexcept>
#include <string>

namespace cnncap {

/// Malformed or inconsistent input data (files, structures, labels).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numerical procedure failed: solver non-convergence, NaN loss, ...
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad command-line usage.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace cnncap
