#pragma once

#include <stdexcept>
#include <string>

namespace optomech {

/// Invalid input: a parameter violates a precondition. Maps to CLI exit code 2.
class InvalidArgument : public std::invalid_argument {
public:
    InvalidArgument(std::string field, const std::string& what)
        : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// A computation could not produce a trustworthy result (singular matrix,
/// step-size underflow, blow-up, eigen-solver failure). Maps to exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace optomech
