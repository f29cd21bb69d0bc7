#pragma once

#include <stdexcept>
#include <string>

namespace sgmv {

/// Bad input: malformed files, violated preconditions, inconsistent dimensions.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical routine failed on otherwise valid input (solver did not
/// converge, matrix irreparably singular, portfolio wiped out).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace sgmv
