#pragma once

#include <stdexcept>
#include <string>

namespace toolbudget {

// Ordering or schema violations in histories, logs, and record files.
struct StructuralError : std::runtime_error {
    explicit StructuralError(const std::string& what) : std::runtime_error(what) {}
};

// Arguments outside an operation's documented domain.
struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid configuration (bad flag combinations, empty markets, ...).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Brute-force enumeration asked to run beyond its supported size.
struct UnsupportedSizeError : std::runtime_error {
    explicit UnsupportedSizeError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace toolbudget
