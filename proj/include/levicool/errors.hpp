#pragma once

#include <stdexcept>
#include <string>

namespace levicool {

/// Bad input: a field out of range, a missing key, an unknown key.
class ValidationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A computation that cannot proceed (step underflow, divergence,
/// truncation leak, non-convergence).
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Process exit codes shared by the CLI and the validate command.
enum class ExitCode : int { success = 0, validation = 1, numerical = 2, io = 3 };

inline void require(bool ok, const std::string &what) {
  if (!ok)
    throw ValidationError(what);
}

} // namespace levicool
