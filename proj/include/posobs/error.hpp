#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace posobs {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class SingularMatrixError : public Error {
public:
    using Error::Error;
};

class MissingNoiseModelError : public Error {
public:
    using Error::Error;
};

/// Iterative method gave up; carries whatever the last iterate was.
class NumericalFailure : public Error {
public:
    NumericalFailure(const std::string& what, std::vector<std::complex<double>> best = {})
        : Error(what), best_iterate(std::move(best)) {}

    std::vector<std::complex<double>> best_iterate;
};

} // namespace posobs
