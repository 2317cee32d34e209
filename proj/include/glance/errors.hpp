#pragma once

#include <stdexcept>
#include <string>

namespace glance {

/// Root of the library's exception hierarchy.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A derivative or value came back non-finite.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// The ODE integrator gave up (step underflow, blow-up, step budget).
class IntegrationError : public Error {
 public:
  IntegrationError(const std::string& what, double last_good_time)
      : Error(what + " (last good time " + std::to_string(last_good_time) + ")"),
        last_good_time_(last_good_time) {}
  double last_good_time() const noexcept { return last_good_time_; }

 private:
  double last_good_time_;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class UnsupportedError : public Error {
 public:
  using Error::Error;
};

class NoIntersectionError : public Error {
 public:
  using Error::Error;
};

/// The requested energy is a critical value of H restricted to the source
/// manifold; the cusp normal form applies instead of a plain flow-out.
class GlancingDetectedError : public Error {
 public:
  using Error::Error;
};

class NotGlancingError : public Error {
 public:
  using Error::Error;
};

class NotLagrangianError : public Error {
 public:
  using Error::Error;
};

class DegenerateFamilyError : public Error {
 public:
  using Error::Error;
};

/// det(P, dP/dpsi) vanished: the generating family does not cover this point.
class ChartBreakdownError : public Error {
 public:
  using Error::Error;
};

class DensityDegenerateError : public Error {
 public:
  using Error::Error;
};

class ValidityDomainError : public Error {
 public:
  using Error::Error;
};

class CausticError : public Error {
 public:
  using Error::Error;
};

class NotApplicableError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace glance
