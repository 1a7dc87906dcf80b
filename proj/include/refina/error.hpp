#pragma once

#include <stdexcept>
#include <string>

namespace refina {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input file contents; carries a 1-based line number when known.
class ParseError : public Error {
public:
    ParseError(const std::string& what, long line = -1)
        : Error(line >= 0 ? what + " (line " + std::to_string(line) + ")" : what),
          line_(line) {}
    long line() const { return line_; }

private:
    long line_;
};

// Shapes of graphs/matrices/permutations do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Node or row/column index out of range.
class IndexError : public Error {
public:
    using Error::Error;
};

// Invalid configuration or argument value.
class ParameterError : public Error {
public:
    using Error::Error;
};

// Numerically or semantically invalid data value (e.g. nonpositive
// alignment score, undefined mean/ratio on empty input).
class ValueError : public Error {
public:
    using Error::Error;
};

// File could not be opened or read.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace refina
