#pragma once

#include <stdexcept>
#include <string>

namespace mclq {

/// Bad input from the caller: shapes, ranges, malformed files or configs.
/// The CLI maps this to exit code 2.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computation produced NaN/Inf, diverged, or failed to converge.
/// The CLI maps this to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
[[noreturn]] inline void fail(const std::string& what) { throw UsageError(what); }
inline void require(bool ok, const std::string& what) {
  if (!ok) fail(what);
}
}  // namespace detail

}  // namespace mclq
