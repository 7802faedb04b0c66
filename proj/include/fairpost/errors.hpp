#pragma once

#include <stdexcept>
#include <string>

namespace fairpost {

/// Precondition or domain-contract failure (bad arguments, shape mismatch,
/// unknown group, ...). Maps to CLI exit code 1.
class validation_error : public std::runtime_error {
public:
  explicit validation_error(const std::string& what) : std::runtime_error(what) {}
};

/// File / parse failure. Also maps to CLI exit code 1.
class io_error : public std::runtime_error {
public:
  explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fairpost
