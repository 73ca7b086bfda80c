#pragma once

#include <stdexcept>
#include <string>

namespace outage {

/// Base class for every error raised by the outage library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent network case (file syntax, dangling endpoints,
/// duplicate ids, disconnected graph, reference bus problems).
class CaseError : public Error {
public:
    using Error::Error;
};

/// A Jacobian whose LU factorization has a pivot below the relative floor.
class SingularJacobian : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

/// Measurement stream problems: schema mismatch, ordering, gap policy.
class StreamError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace outage
