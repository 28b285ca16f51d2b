#ifndef KOPPA_ERROR_HPP
#define KOPPA_ERROR_HPP

#include <stdexcept>
#include <string>

namespace koppa {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape / argument violations detected before any computation.
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// Iterative numerics failed to converge, or NaN/Inf showed up where it must not.
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& msg) : Error(msg) {}
};

// Malformed input files (config, CSV, checkpoint).
class ParseError : public Error {
public:
    explicit ParseError(const std::string& msg) : Error(msg) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

} // namespace koppa

#endif
