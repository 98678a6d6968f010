#pragma once

#include <stdexcept>
#include <string>

namespace rcm {

/// Base class of every error raised by the library. `exit_code()` is the
/// process status the CLI reports for it.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
  virtual const char* kind() const noexcept { return "error"; }
};

/// Invalid parameters: divisibility violations, out-of-range arguments, bad
/// boundary specifications.
class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
  const char* kind() const noexcept override { return "config"; }
};

/// An exhaustive enumeration or combinatorial routine refused to run because
/// its configured cap would be exceeded.
class CapExceeded : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
  const char* kind() const noexcept override { return "cap-exceeded"; }
};

/// Coupling from the past hit its horizon cap without coalescing.
class NotCoalesced : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
  const char* kind() const noexcept override { return "not-coalesced"; }
};

/// Broken internal invariant (for instance a monotone sandwich violation).
class InvariantViolation : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "invariant"; }
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ConfigError(what);
}

}  // namespace rcm
