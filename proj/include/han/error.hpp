#pragma once

#include <stdexcept>
#include <string>

namespace han {

enum class ErrorCode {
    InvalidArgument = 1,
    DimensionMismatch = 2,
    DegenerateReflector = 3,
    ParseError = 4,
    IoError = 5,
    UnknownName = 6,
    Diverged = 7,
    Unsupported = 8,
    Internal = 9,
};

/// Exception carrying a machine-readable code alongside the message.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

} // namespace han
