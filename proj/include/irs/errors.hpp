#pragma once

#include <stdexcept>
#include <string>

namespace irs {

// Bad arguments, malformed files, missing splits. Maps to CLI exit code 2.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Checksum mismatch against a manifest entry.
class IntegrityError : public InputError {
 public:
  using InputError::InputError;
};

// A computation produced a non-finite or otherwise unusable value. Exit code 4.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <typename Error = InputError>
inline void require(bool condition, const std::string& message) {
  if (!condition) throw Error(message);
}

}  // namespace detail
}  // namespace irs
