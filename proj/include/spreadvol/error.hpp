#pragma once

#include <stdexcept>
#include <string>

namespace spreadvol {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An argument is outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Too few observations to form the requested estimate.
class InsufficientDataError : public Error {
public:
    using Error::Error;
};

/// An inverse problem has no solution for the requested value.
class NoSolutionError : public Error {
public:
    using Error::Error;
};

/// Malformed or semantically invalid input (files, configuration).
class InvalidInputError : public Error {
public:
    using Error::Error;
};

/// Reading or writing a file failed.
class IoError : public Error {
public:
    using Error::Error;
};

/// An iterative method stopped without meeting its convergence test.
/// The best iterate found is carried along so callers can still report it.
template <class Best>
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, Best best)
        : Error(what), best_(std::move(best)) {}

    const Best& best() const noexcept { return best_; }

private:
    Best best_;
};

namespace detail {

inline void require(bool ok, const char* what) {
    if (!ok) throw DomainError(what);
}

inline void require_positive(double x, const char* name) {
    if (!(x > 0.0)) throw DomainError(std::string(name) + " must be positive");
}

inline void require_non_negative(double x, const char* name) {
    if (!(x >= 0.0)) throw DomainError(std::string(name) + " must be non-negative");
}

}  // namespace detail
}  // namespace spreadvol
