#pragma once

#include <stdexcept>
#include <string>

namespace mbm {

/// Malformed or inconsistent input (dimension mismatch, bad file, bad config).
class InputError : public std::invalid_argument {
public:
    explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

/// A numerical operation could not be carried out (singular innovation
/// covariance, zero-likelihood measurement set).
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mbm
