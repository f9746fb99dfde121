#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace orthomix {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree (matrix product, block length, model geometry).
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Modified Gram-Schmidt met a (numerically) linearly dependent row.
class DegenerateError : public Error {
public:
    using Error::Error;
};

/// An image of the wrong kind was handed to an operation (plain vs encrypted).
class KindError : public Error {
public:
    using Error::Error;
};

/// Operation is not allowed in the current state (e.g. transforming an
/// already encrypted model).
class StateError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class DivergenceError : public Error {
public:
    using Error::Error;
};

/// Malformed on-disk file. `offset` is the byte position where decoding
/// stopped.
class FormatError : public Error {
public:
    enum class Reason { bad_magic, bad_version, truncated, inconsistent };

    FormatError(Reason reason, std::size_t offset, const std::string& what)
        : Error(what), reason_(reason), offset_(offset) {}

    Reason reason() const noexcept { return reason_; }
    std::size_t offset() const noexcept { return offset_; }

private:
    Reason reason_;
    std::size_t offset_;
};

}  // namespace orthomix
