#pragma once

#include <stdexcept>
#include <string>

namespace robustgp {

/// Malformed or inconsistent input data (dimension mismatch, non-finite
/// values, too few rows).
class DataError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical routine failed (factorization, non-finite objective).
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what, double attempted_jitter = 0.0)
        : std::runtime_error(what), jitter_(attempted_jitter) {}

    double attempted_jitter() const noexcept { return jitter_; }

private:
    double jitter_;
};

}  // namespace robustgp
