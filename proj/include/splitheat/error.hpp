#pragma once

#include <stdexcept>
#include <string>

namespace splitheat {

/// Raised for violated preconditions (bad sizes, non-nested resolutions,
/// degenerate geometry). Numerical verdicts such as a failed nonnegativity
/// certificate are reported as values, not thrown.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace splitheat
