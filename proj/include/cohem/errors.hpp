#pragma once

#include <stdexcept>
#include <string>

namespace cohem {

// Bad argument values or mismatched dimensions.
struct InputError : std::invalid_argument {
    explicit InputError(const std::string& msg) : std::invalid_argument(msg) {}
};

// A caller broke an API precondition (inconsistent state, infeasible action).
struct ContractError : std::logic_error {
    explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

// Malformed scenario or results file.
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Instance exceeds the hard size bound of an exhaustive routine.
struct SizeLimitError : std::runtime_error {
    explicit SizeLimitError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace cohem
