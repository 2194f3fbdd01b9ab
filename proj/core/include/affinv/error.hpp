#pragma once

#include <stdexcept>
#include <string>

namespace affinv {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (bad shape, out-of-range value, ...).
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// Corpus ingestion failed. The message names the environment/session/row.
class IngestError : public InvalidInput {
public:
    using InvalidInput::InvalidInput;
};

/// An iterative solver hit its iteration cap before reaching tolerance.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double residual, std::size_t iterations)
        : Error(what), residual_(residual), iterations_(iterations) {}

    double residual() const noexcept { return residual_; }
    std::size_t iterations() const noexcept { return iterations_; }

private:
    double residual_;
    std::size_t iterations_;
};

}  // namespace affinv
