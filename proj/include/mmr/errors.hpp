#pragma once

#include <stdexcept>
#include <string>

namespace mmr {

// Bad input data: malformed files, duplicate or unknown ids, schema violations.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure: non-finite values, training divergence.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mmr
