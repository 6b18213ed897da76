#pragma once

#include <stdexcept>
#include <string>

namespace eenas {

// Input rejected: incompatible shapes or alphabet violations.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Numeric-domain violation: non-finite values where finite ones are required.
struct NumericError : std::domain_error {
    using std::domain_error::domain_error;
};

// A documented precondition was broken by the caller.
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

// Malformed external input: binary files, archives, checkpoints.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad run configuration (schema violations, unknown keys).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace eenas
