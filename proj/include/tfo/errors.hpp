#pragma once

#include <stdexcept>
#include <string>

namespace tfo {

/// Malformed or inconsistent configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data that cannot be processed: bad files, empty rings, NaN losses (CLI exit code 3).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Operation called in a way its contract forbids.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace tfo
