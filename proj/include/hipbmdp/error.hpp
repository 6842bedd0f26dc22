#pragma once

#include <stdexcept>
#include <string>

namespace hipbmdp {

/// Malformed input: bad dimensions, invalid probabilities, unknown config keys.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A computation that should converge did not, or produced non-finite values.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw ValidationError(message);
}

}  // namespace hipbmdp
