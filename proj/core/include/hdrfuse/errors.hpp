#ifndef HDRFUSE_ERRORS_HPP
#define HDRFUSE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace hdrfuse {

// Malformed or inconsistent input data (files, manifests, stacks).
class DataError : public std::runtime_error {
public:
  explicit DataError(const std::string &msg) : std::runtime_error(msg) {}
};

// Numerical failure during iteration (non-finite values, model
// inconsistencies at a specific pixel). Carries location context so the
// caller can report where the breakdown happened.
class NumericalError : public std::runtime_error {
public:
  explicit NumericalError(const std::string &msg) : std::runtime_error(msg) {}
};

} // namespace hdrfuse

#endif
