#pragma once

#include <stdexcept>
#include <string>

namespace qsm {

// Bad arguments or violated preconditions. CLI maps this to exit code 2.
class invalid_argument : public std::invalid_argument {
public:
    explicit invalid_argument(const std::string& msg) : std::invalid_argument(msg) {}
};

// Numeric failure at runtime (divergence, rank deficiency, symmetry residue).
// CLI maps this to exit code 3.
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

// File system and format problems. CLI maps this to exit code 4.
class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace qsm
