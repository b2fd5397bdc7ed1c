#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cloudfusion {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor or raster dimensions disagree. The message names the offending axes.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// An argument is outside its admissible range.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// A documented precondition of an operation was violated by the caller.
class ContractError : public Error {
public:
    using Error::Error;
};

/// A NaN or Inf showed up where only finite values are allowed.
class NonFiniteError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// File-format errors are kept distinct so callers can react to each one.
class FormatError : public IoError {
public:
    using IoError::IoError;
};

class BadMagicError : public FormatError {
public:
    using FormatError::FormatError;
};

class TruncatedError : public FormatError {
public:
    TruncatedError(const std::string& what, std::size_t expected, std::size_t actual)
        : FormatError(what + ": expected " + std::to_string(expected) + " bytes, got " +
                      std::to_string(actual)),
          expected_bytes(expected),
          actual_bytes(actual) {}

    std::size_t expected_bytes;
    std::size_t actual_bytes;
};

class DimOverflowError : public FormatError {
public:
    using FormatError::FormatError;
};

}  // namespace cloudfusion
