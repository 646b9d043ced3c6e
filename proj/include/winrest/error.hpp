// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace winrest {

/// Failure category. The CLI maps categories onto distinct exit codes.
enum class ErrorKind {
    config,      // bad configuration value or unknown key
    data,        // dataset layout / image file problems
    shape,       // tensor dimension contract violated
    numeric,     // non-finite values where finite ones are required
    io,          // filesystem failures
    checkpoint,  // container version/checksum/config-hash mismatch
};

inline const char* to_string(ErrorKind k) {
    switch (k) {
        case ErrorKind::config: return "config";
        case ErrorKind::data: return "data";
        case ErrorKind::shape: return "shape";
        case ErrorKind::numeric: return "numeric";
        case ErrorKind::io: return "io";
        case ErrorKind::checkpoint: return "checkpoint";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg)
        : std::runtime_error(std::string(to_string(kind)) + ": " + msg), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

namespace detail {
inline void msg_append(std::ostringstream&) {}

template <typename First, typename... Rest>
void msg_append(std::ostringstream& os, First&& first, Rest&&... rest) {
    os << std::forward<First>(first);
    msg_append(os, std::forward<Rest>(rest)...);
}
}  // namespace detail

/// Builds a message from stream-able pieces and throws.
template <typename... Parts>
[[noreturn]] void fail(ErrorKind kind, Parts&&... parts) {
    std::ostringstream os;
    detail::msg_append(os, std::forward<Parts>(parts)...);
    throw Error(kind, os.str());
}

template <typename... Parts>
void require(bool cond, ErrorKind kind, Parts&&... parts) {
    if (!cond) fail(kind, std::forward<Parts>(parts)...);
}

}  // namespace winrest
