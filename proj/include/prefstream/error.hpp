#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <variant>

namespace prefstream {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input data (histories, boundaries, sidecars).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Caller broke an operation's precondition.
class ContractError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Math outside its domain, e.g. log of a zero probability.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Non-retryable backend failure, or a transport failure after retries ran out.
class BackendError : public Error {
public:
    using Error::Error;
};

/// Retryable network-level failure (connection refused, 5xx, 429).
class TransportError : public BackendError {
public:
    using BackendError::BackendError;
};

/// The backend cannot perform the requested operation at all.
class CapabilityError : public BackendError {
public:
    using BackendError::BackendError;
};

class GenerationError : public Error {
public:
    using Error::Error;
};

class JudgeError : public Error {
public:
    using Error::Error;
};

/// A user dropped by a pipeline filter. Not a failure.
struct UserSkip {
    std::string reason;
};

template <typename T>
using OrSkip = std::variant<T, UserSkip>;

template <typename T>
bool is_skip(const OrSkip<T>& v) {
    return std::holds_alternative<UserSkip>(v);
}

} // namespace prefstream
