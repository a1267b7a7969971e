#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace canopy {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed cell in an input file. Row and column are 1-based data coordinates
/// (row 1 is the first line after the header).
class ParseError : public Error {
public:
    ParseError(std::size_t row, std::size_t column, const std::string& what)
        : Error(what), row_(row), column_(column) {}
    std::size_t row() const noexcept { return row_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t row_;
    std::size_t column_;
};

class TargetMissingError : public Error {
public:
    using Error::Error;
};

class SchemaError : public Error {
public:
    using Error::Error;
};

class ArgumentError : public Error {
public:
    using Error::Error;
};

class DegenerateError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class UnavailableError : public Error {
public:
    using Error::Error;
};

}  // namespace canopy
