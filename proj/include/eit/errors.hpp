#pragma once

#include <stdexcept>
#include <string>

namespace eit {

// Base for every error raised by the library. The C API maps each subclass
// onto an eit_status code; the CLI maps those onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke an operation's precondition (shape mismatch, bad index).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Convolution / pooling geometry that yields no output positions.
class GeometryError : public Error {
 public:
  using Error::Error;
};

// Invalid ModelConfig, TrainConfig or schedule request.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or unreadable file. The message names the offending path.
class IoError : public Error {
 public:
  using Error::Error;
};

// Divergence, non-finite values, failed gradient check.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// A probe or checker could not produce a meaningful answer for its input.
class DiagnosticError : public Error {
 public:
  using Error::Error;
};

}  // namespace eit
