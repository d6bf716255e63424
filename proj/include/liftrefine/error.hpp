// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace liftrefine {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes; the message names the op and the shapes involved.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Invalid argument or precondition violation (bad config, malformed file, out-of-range index).
class ValueError : public Error {
public:
    using Error::Error;
};

/// Non-finite values encountered during training or sampling.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// A point lies behind (or on) the camera plane.
class BehindCameraError : public ValueError {
public:
    using ValueError::ValueError;
};

} // namespace liftrefine
