#pragma once

#include <stdexcept>
#include <string>

namespace sse {

// Error categories map 1:1 onto CLI exit codes (see tools/): config 2,
// divergence 3, io 4. Shape/precondition violations use std::invalid_argument.

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

class DivergenceError : public std::runtime_error {
public:
    explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sse
