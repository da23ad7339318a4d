#pragma once

#include <stdexcept>
#include <string>

namespace mcf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidAxisError : public Error {
 public:
  using Error::Error;
};

/// Dimension or valence mismatch between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// det(g) fell below the immersion threshold at some node.
class DegenerateImmersionError : public Error {
 public:
  using Error::Error;
};

/// Non-finite state encountered while integrating (usually near extinction).
class BlowUpError : public Error {
 public:
  using Error::Error;
};

/// Inputs violate a sampling/pairing protocol (nonuniform times, mismatched grids, ...).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// Parameter outside the domain where the operation is defined.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Step policy cannot honour the requested sample times.
class PolicyError : public Error {
 public:
  using Error::Error;
};

/// Experiment configuration failed validation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A symmetry precondition does not hold for the initial data.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

}  // namespace mcf
