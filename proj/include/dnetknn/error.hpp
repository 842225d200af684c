#pragma once

#include <stdexcept>
#include <string>

namespace dnetknn {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid hyperparameters or incompatible option combinations.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Shapes of matrices/vectors/layers do not line up.
class DimensionError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

// File could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

// A file was readable but its contents violate the expected layout.
class FormatError : public Error {
public:
    using Error::Error;
};

class BadMagicError : public FormatError {
public:
    using FormatError::FormatError;
};

class VersionError : public FormatError {
public:
    using FormatError::FormatError;
};

class TruncatedError : public FormatError {
public:
    using FormatError::FormatError;
};

// Internally inconsistent inputs: count mismatches, out-of-range indices,
// caches that do not belong to the parameters they are used with.
class ConsistencyError : public Error {
public:
    using Error::Error;
};

// Not enough examples (per class or overall) to satisfy a request.
class CapacityError : public Error {
public:
    using Error::Error;
};

// A numerical procedure produced a non-finite value.
class DivergenceError : public Error {
public:
    using Error::Error;
};

} // namespace dnetknn
