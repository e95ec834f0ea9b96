// rankscan/errors.hpp
//
// Exception types shared by every module. The CLI maps each one to a
// distinct process exit code.
#pragma once

#include <stdexcept>
#include <string>

namespace rankscan {

/// Invalid argument or inconsistent configuration (exit code 2).
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A calibration table does not match the data size, net or statistic it is
/// used with (exit code 3).
class IncompatibleTableError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File system failure or unreadable input (exit code 4).
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input content; carries the offending line number.
class ParseError : public IoError {
public:
    ParseError(const std::string& what, std::size_t line)
        : IoError(what + " (line " + std::to_string(line) + ")"), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
    if (!condition) throw ParameterError(message);
}

}  // namespace detail
}  // namespace rankscan
