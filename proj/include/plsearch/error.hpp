#pragma once

#include <stdexcept>
#include <string>

namespace plsearch {

// Root of every error the library throws. The subclasses map one-to-one onto
// the failure classes callers are expected to distinguish.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid parameters or configuration (bad sizes, out-of-domain values).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Input file is well formed but uses an encoding we do not handle.
class DecodeError : public Error {
public:
    using Error::Error;
};

// Input file is malformed or truncated.
class FormatError : public Error {
public:
    using Error::Error;
};

class RangeError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

// Inconsistent incremental state, e.g. sliding a bin below zero.
class ConsistencyError : public Error {
public:
    using Error::Error;
};

class TrainingError : public Error {
public:
    using Error::Error;
};

// Two compressed features from different segment maps were combined.
class SegmentMismatchError : public Error {
public:
    using Error::Error;
};

class InstanceTooLargeError : public Error {
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

class ChecksumError : public FormatError {
public:
    using FormatError::FormatError;
};

// A structural invariant of a loaded or computed artifact does not hold.
class InvariantError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace plsearch
