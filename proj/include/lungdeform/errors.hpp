#pragma once

#include <stdexcept>
#include <string>

namespace lungdeform {

// Bad input: malformed files, violated preconditions, mismatched sizes.
// The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Numerical failure: diverged optimization, singular linear system.
// The CLI maps this to exit code 2.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace lungdeform
