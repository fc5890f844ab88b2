#pragma once

#include <stdexcept>
#include <string>

namespace rydcpw {

// Base of every exception thrown by the library. The CLI maps the concrete
// kinds onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or missing configuration, data-file content, or parameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An argument outside the domain of a physical model (e.g. |dl| != 1 for a
/// dipole matrix element, a temperature outside the tabulated range).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure failed: non-convergence, rank deficiency, underflow.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace rydcpw
