#pragma once

#include <stdexcept>
#include <string>

namespace mgmlmc {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LevelMismatch : public Error {
 public:
  using Error::Error;
};

class EmbeddingNotPSD : public Error {
 public:
  using Error::Error;
};

class LinearSolveFailure : public Error {
 public:
  using Error::Error;
};

/// Raised by the Burgers forward sweep when a time step violates the
/// MacCormack stability bound.
class StabilityViolation : public Error {
 public:
  StabilityViolation(long step, double dt, double bound)
      : Error("MacCormack stability violated at step " + std::to_string(step) +
              ": dt=" + std::to_string(dt) + " > bound=" + std::to_string(bound)),
        step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

class LineSearchFailure : public Error {
 public:
  using Error::Error;
};

class InsufficientSamples : public Error {
 public:
  using Error::Error;
};

class InvalidQ : public Error {
 public:
  using Error::Error;
};

class DegenerateStart : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace mgmlmc
