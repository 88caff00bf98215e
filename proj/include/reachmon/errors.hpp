#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace reachmon {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree (matrix/vector orders).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A scalar argument is outside its mathematical domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// The ellipsoid center already lies inside the unsafe set.
class CenterUnsafeError : public Error {
 public:
  CenterUnsafeError(std::string what, std::size_t halfspace)
      : Error(std::move(what)), halfspace_(halfspace) {}
  std::size_t halfspace() const { return halfspace_; }

 private:
  std::size_t halfspace_;
};

/// Steady-state estimator calibration failed (e.g. undetectable pair).
class CalibrationError : public Error {
 public:
  using Error::Error;
};

/// Reachability certificate could not be produced, or failed integrity checks.
class CertificateError : public Error {
 public:
  explicit CertificateError(std::string what,
                            std::vector<std::string> diagnostics = {})
      : Error(std::move(what)), diagnostics_(std::move(diagnostics)) {}
  const std::vector<std::string>& diagnostics() const { return diagnostics_; }

 private:
  std::vector<std::string> diagnostics_;
};

class ClassificationError : public Error {
 public:
  using Error::Error;
};

/// Input file or argument does not satisfy its schema.
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace reachmon
