#pragma once

#include <stdexcept>
#include <string>

namespace sspdsim {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Parse failures, unknown keys, violated config invariants.
struct ConfigError : Error {
    using Error::Error;
};

// Numeric argument outside its documented domain.
struct DomainError : Error {
    using Error::Error;
};

// Requested a calibration point (e.g. wavelength) the profile does not carry.
struct CalibrationError : Error {
    using Error::Error;
};

// Out-of-order arrivals or unsorted event streams.
struct SequenceError : Error {
    using Error::Error;
};

// Operation that needs at least one element got none.
struct EmptyInputError : Error {
    using Error::Error;
};

}  // namespace sspdsim
