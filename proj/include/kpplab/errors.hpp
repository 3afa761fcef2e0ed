#pragma once

#include <stdexcept>
#include <string>

namespace kpplab {

// Base of every error the library raises. Subclasses name the failure class
// so callers (and the CLI exit-code mapping) can react without string matching.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class StepSizeError : public Error {
public:
    using Error::Error;
};

// A discrete invariant that must hold exactly under the monotone bound was
// broken; signals a scheme bug, not a property of the model.
class InvariantError : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public Error {
public:
    using Error::Error;
};

class UnsupportedError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class ConstructionError : public Error {
public:
    using Error::Error;
};

}  // namespace kpplab
