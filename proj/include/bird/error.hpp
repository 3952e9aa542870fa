#pragma once

#include <stdexcept>
#include <string>

namespace bird {

// Invalid runtime data: bad frame shape, empty clip, out-of-frame box.
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Structural misconfiguration: channel mismatch, bad layer wiring.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed on-disk artifact. Message carries file and line context.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline ParseError parse_error(const std::string& file, long line, const std::string& what) {
    return ParseError(file + ":" + std::to_string(line) + ": " + what);
}

}  // namespace bird
