#pragma once

#include <stdexcept>
#include <string>

namespace entprog {

/// Base class for every error raised by the library. The CLI maps each
/// subclass to its own exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Out-of-range argument or invalid hyperparameter.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Prediction dispersion collapsed below the priority floor.
class DegenerateModelError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent time/loss bookkeeping (supernet traces, manifests).
class AccountingError : public Error {
 public:
  using Error::Error;
};

/// Config file failed validation.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Missing or unreadable input artifact (checkpoint, dataset, manifest).
class InputError : public Error {
 public:
  using Error::Error;
};

}  // namespace entprog
