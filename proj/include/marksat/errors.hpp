// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace marksat {

enum class ErrorKind {
  kParse,            // malformed DIMACS / assignment text
  kInvalidArgument,  // violated precondition on an argument
  kInfeasible,       // pinning falsifies a clause or admits no extension
  kCapExceeded,      // enumeration or search budget exceeded
  kRegimeViolation,  // a structural guarantee failed at these parameters
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kInvalidArgument: return "invalid-argument";
    case ErrorKind::kInfeasible: return "infeasible";
    case ErrorKind::kCapExceeded: return "cap-exceeded";
    case ErrorKind::kRegimeViolation: return "regime-violation";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(ErrorKind::kParse, what) {}
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error(ErrorKind::kInvalidArgument, what) {}
};

class InfeasiblePinning : public Error {
 public:
  explicit InfeasiblePinning(const std::string& what) : Error(ErrorKind::kInfeasible, what) {}
};

/// Thrown when a component is too large to enumerate or a search runs out of
/// nodes. Carries the size (in variables) of the offending component.
class CapExceeded : public Error {
 public:
  CapExceeded(const std::string& what, std::size_t component_size)
      : Error(ErrorKind::kCapExceeded, what), component_size_(component_size) {}
  std::size_t component_size() const noexcept { return component_size_; }

 private:
  std::size_t component_size_;
};

class RegimeViolation : public Error {
 public:
  explicit RegimeViolation(const std::string& what) : Error(ErrorKind::kRegimeViolation, what) {}
};

}  // namespace marksat
