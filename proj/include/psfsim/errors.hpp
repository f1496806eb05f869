#pragma once

#include <stdexcept>
#include <string>

namespace psfsim {

// Base class for every domain error raised by this library. CLI maps these
// to exit code 1; anything else (I/O, usage) maps to exit code 2.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct AllZeroKernelError : Error {
    AllZeroKernelError() : Error("kernel has zero total flux") {}
};

struct WindowOutOfBoundsError : Error {
    using Error::Error;
};

struct NonDivisibleSizeError : Error {
    using Error::Error;
};

struct ShapeMismatchError : Error {
    using Error::Error;
};

struct OutOfRangeError : Error {
    using Error::Error;
};

struct ObjectInsideFocalError : Error {
    using Error::Error;
};

struct ValueOutOfRangeError : Error {
    using Error::Error;
};

struct DivergenceError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct FormatError : Error {
    using Error::Error;
};

} // namespace psfsim
