#pragma once

#include <stdexcept>
#include <string>

namespace mixehr {

// Bad input data, bad parameters or violated preconditions. The CLI maps
// this to exit code 1.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Filesystem failures: missing, unreadable, truncated or unwritable files.
// The CLI maps this to exit code 2.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace mixehr
