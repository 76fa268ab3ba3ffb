#pragma once

#include <stdexcept>
#include <string>

namespace ddpc {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid parameters or configuration (non-PD weights, Nyquist violation, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A window or index falls outside the available data.
class OutOfRangeError : public Error {
public:
    using Error::Error;
};

/// Training data cannot support the requested fit.
class DegenerateDataError : public Error {
public:
    using Error::Error;
};

/// A caller broke a structural contract, e.g. changing problem dimensions on refresh.
class ContractViolation : public Error {
public:
    using Error::Error;
};

/// File read/write failures; the message carries the offending path.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace ddpc
