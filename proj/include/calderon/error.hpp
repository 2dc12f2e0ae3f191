#pragma once

#include <stdexcept>
#include <string>

namespace calderon {

/// Base class for all library errors. The CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad user input: unknown names, invalid parameters, malformed config.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A numerical check or tolerance was breached.
class ToleranceError : public Error {
public:
    using Error::Error;
};

/// Mesh element cap or another resource budget was exceeded.
class BudgetError : public Error {
public:
    using Error::Error;
};

/// Geometric construction failed (chart radius below floor, point off boundary).
class GeometryError : public Error {
public:
    using Error::Error;
};

/// Boundary grid too coarse for the requested operation.
class ResolutionError : public Error {
public:
    using Error::Error;
};

} // namespace calderon
