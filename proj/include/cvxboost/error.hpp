#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cvxboost {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite value produced while evaluating a loss or expectation.
class NumericalError : public Error {
public:
    NumericalError(const std::string& what, std::size_t index)
        : Error(what + " (sample " + std::to_string(index) + ")"), index_(index) {}
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class SchemaError : public Error {
public:
    using Error::Error;
};

class EmptyDataset : public Error {
public:
    EmptyDataset() : Error("dataset has no rows") {}
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// A loss or measure does not provide what a convergence hypothesis needs.
class AssumptionError : public Error {
public:
    using Error::Error;
};

class CapacityError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class UnboundedError : public Error {
public:
    using Error::Error;
};

/// A per-iteration decrease inequality was violated during a run.
class CertificateError : public Error {
public:
    using Error::Error;
};

class UnsupportedGenerator : public Error {
public:
    using Error::Error;
};

}  // namespace cvxboost
