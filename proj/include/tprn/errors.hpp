#pragma once

#include <stdexcept>
#include <string>

namespace tprn {

// Error taxonomy mapped to CLI exit codes: ConfigError -> 2, IoError -> 3,
// anything else escaping main -> 1.

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Inputs that are syntactically fine but mathematically unusable
// (zero vectors, empty sequences, empty batches).
class DegenerateInputError : public InputError {
public:
    using InputError::InputError;
};

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace tprn
