#pragma once

#include <stdexcept>
#include <string>

namespace ltvforge {

// Error taxonomy mirrors the CLI exit codes: config/input problems exit 2,
// numeric aborts exit 3, checkpoint/data mismatches exit 4.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct InputError : std::runtime_error {
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct MismatchError : std::runtime_error {
    explicit MismatchError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ltvforge
