#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace chainfit {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input text. `line()` is 1-based, 0 when not tied to a line.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class EmptyInputError : public Error {
public:
    using Error::Error;
};

class LookupError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class DegeneracyError : public Error {
public:
    using Error::Error;
};

class CapacityError : public Error {
public:
    CapacityError(const std::string& what, std::size_t maximum)
        : Error(what + " (maximum " + std::to_string(maximum) + ")"), maximum_(maximum) {}
    std::size_t maximum() const noexcept { return maximum_; }

private:
    std::size_t maximum_;
};

class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, int iteration, double step)
        : Error(what + " at iteration " + std::to_string(iteration) + " (step " + std::to_string(step) +
                ")"),
          iteration_(iteration), step_(step) {}
    int iteration() const noexcept { return iteration_; }
    double step() const noexcept { return step_; }

private:
    int iteration_;
    double step_;
};

/// Invalid user configuration (maps to CLI exit code 1).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Filesystem failure; message carries the offending path.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace chainfit
