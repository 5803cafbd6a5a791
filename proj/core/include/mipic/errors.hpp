#pragma once

#include <stdexcept>
#include <string>

namespace mipic {

/// Broad error classes. Each maps onto a CLI exit code (see exit_code()).
enum class ErrorKind {
    Usage = 1,
    Data = 2,
    Numerical = 3,
    Io = 4,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

/// Operand shapes do not conform.
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& what) : Error(ErrorKind::Numerical, what) {}
};

/// Input that cannot produce a meaningful value (all-masked rows, zero norms, constant vectors).
class DegenerateError : public Error {
public:
    explicit DegenerateError(const std::string& what) : Error(ErrorKind::Numerical, what) {}
};

/// NaN/Inf encountered.
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(ErrorKind::Numerical, what) {}
};

/// Malformed or out-of-range user data (token ids, dataset rows, corpora).
class InputError : public Error {
public:
    explicit InputError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

/// Inconsistent configuration values.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

/// Caller violated an API contract (e.g. backward() on a non-scalar).
class ContractError : public Error {
public:
    explicit ContractError(const std::string& what) : Error(ErrorKind::Usage, what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

}  // namespace mipic
