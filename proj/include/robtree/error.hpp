#pragma once

#include <stdexcept>
#include <string>

namespace robtree {

/// Error categories; the CLI maps them onto exit codes 2, 3 and 4.
enum class ErrorKind { Validation, ResourceCap, Backend };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Malformed input: bad CSV cell, bound violation, invalid tree, bad parameter.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what) : Error(ErrorKind::Validation, what) {}
};

/// An enumeration or iteration budget was exhausted.
class ResourceCapError : public Error {
public:
    explicit ResourceCapError(const std::string& what) : Error(ErrorKind::ResourceCap, what) {}
};

/// A main-problem backend failed or returned an unusable solution.
class BackendError : public Error {
public:
    explicit BackendError(const std::string& what) : Error(ErrorKind::Backend, what) {}
};

const char* to_string(ErrorKind kind) noexcept;

} // namespace robtree
