#pragma once

#include <stdexcept>
#include <string>

namespace ltsm {

/// Invalid configuration or usage; the CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed or inconsistent input data; the CLI maps this to exit code 1.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ltsm
