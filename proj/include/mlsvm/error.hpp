#pragma once

#include <stdexcept>
#include <string>

namespace mlsvm {

/// Bad input: unreadable files, malformed data, invalid configuration.
/// The CLI maps it to exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An internal invariant failed. The CLI maps it to exit code 2.
class InvariantError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw Error(message);
}

inline void ensure(bool condition, const std::string& message) {
    if (!condition) throw InvariantError(message);
}

}  // namespace mlsvm
