#pragma once

#include <stdexcept>
#include <string>

namespace nptest {

/// Bad user input: malformed files, invalid argument combinations.
class input_error : public std::invalid_argument {
public:
    explicit input_error(const std::string& what) : std::invalid_argument(what) {}
};

/// A configuration that is structurally valid but cannot be solved
/// (no feasible h, unattainable sample size, unsupported calibration).
class infeasible_error : public std::runtime_error {
public:
    explicit infeasible_error(const std::string& what) : std::runtime_error(what) {}
};

/// Internal numerical failure (singular solve, bracket failure).
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

/// Design matrix is rank deficient where full rank is required.
class degenerate_design_error : public numeric_error {
public:
    explicit degenerate_design_error(const std::string& what) : numeric_error(what) {}
};

} // namespace nptest
