#pragma once

#include <stdexcept>
#include <string>

namespace lambda1 {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace lambda1
