#pragma once

#include <stdexcept>
#include <string>

namespace vbgs {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid or non-finite parameter values.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Two images (or an image and a weight bundle) disagree in shape.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A render or fit was requested with an inconsistent configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// File could not be read, written, or parsed.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace vbgs
