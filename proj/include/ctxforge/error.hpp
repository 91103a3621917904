#pragma once

#include <stdexcept>
#include <string>

namespace ctxforge {

/// Failure categories. The numeric values double as CLI exit codes.
enum class ErrorKind : int {
    Config = 2,
    Data = 3,
    Service = 4,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

class ServiceError : public Error {
public:
    explicit ServiceError(const std::string& what) : Error(ErrorKind::Service, what) {}
};

/// The service answered, but the answer violates the wire contract.
class ProtocolError : public ServiceError {
public:
    explicit ProtocolError(const std::string& what) : ServiceError(what) {}
};

}  // namespace ctxforge
