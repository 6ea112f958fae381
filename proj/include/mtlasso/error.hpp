#pragma once
#include <stdexcept>
#include <string>

namespace mtlasso {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Inconsistent matrix/vector shapes.
class DimensionError : public Error { using Error::Error; };

/// Block norm requested with an exponent pair outside {1, 2, inf}.
class UnsupportedNormError : public Error { using Error::Error; };

/// Bad experiment or model configuration (index formula out of range, bad keys, ...).
class ConfigError : public Error { using Error::Error; };

/// Argument outside the domain of a closed-form expression (log of a value <= 1, ...).
class DomainError : public Error { using Error::Error; };

/// A matrix that must be symmetric positive definite is not.
class SpdError : public Error { using Error::Error; };

/// A matrix that must be inverted is singular.
class SingularityError : public Error { using Error::Error; };

/// Non-finite entries in input data.
class DataError : public Error { using Error::Error; };

} // namespace mtlasso
