#pragma once

#include <stdexcept>
#include <string>

namespace qdetect {

// Violated precondition on an argument (bad dt, dimension mismatch, tol <= 0, ...).
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Numerical failure at runtime: drift blowup, overflow, non-stopping paths,
// singular systems, exhausted brackets.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unparseable or semantically invalid experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw PreconditionError(message);
}

}  // namespace qdetect
