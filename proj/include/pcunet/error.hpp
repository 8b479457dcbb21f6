#pragma once

#include <stdexcept>
#include <string>

namespace pcunet {

/// Base class for every error raised by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or invariant-violating file contents.
class ParseError : public Error {
public:
    using Error::Error;
};

class BoundsError : public Error {
public:
    using Error::Error;
};

/// Inconsistent model, experiment, or tensor-shape configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A value violates a documented precondition or type invariant.
class InvariantError : public Error {
public:
    using Error::Error;
};

}  // namespace pcunet
