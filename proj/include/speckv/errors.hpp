#pragma once

#include <stdexcept>
#include <string>

namespace speckv {

// Bad values in a config file or on the command line. CLI maps this to exit code 2.
struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Integer overflow in exact sizing arithmetic. Never silently wrapped.
struct overflow_error : std::runtime_error {
    explicit overflow_error(const std::string& msg) : std::runtime_error(msg) {}
};

// A compressed payload that cannot be decoded with its stored scheme.
struct corrupt_payload : std::runtime_error {
    explicit corrupt_payload(const std::string& msg) : std::runtime_error(msg) {}
};

// Translation of a virtual triple that has no page-table entry.
struct translation_fault : std::runtime_error {
    explicit translation_fault(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace speckv
