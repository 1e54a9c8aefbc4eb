#pragma once

#include <stdexcept>
#include <string>

namespace jbm {

// Exit-code mapping (see tools/jbmdiff.cpp): usage=1, input=2, consistency=3, numerical=4.

struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error("dimension error: " + msg) {}
};

struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& msg) : std::runtime_error("domain error: " + msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

// Malformed or unreadable input files (parse errors, bad magic, truncation).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error("format error: " + msg) {}
};

// Artifacts that do not belong together (checkpoint vs. dataset fingerprints).
struct ConsistencyError : std::runtime_error {
    explicit ConsistencyError(const std::string& msg) : std::runtime_error("consistency error: " + msg) {}
};

// Non-finite values where finite ones are required (diverged training, bad gradients).
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error("numerical error: " + msg) {}
};

}  // namespace jbm
