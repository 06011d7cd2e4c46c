#pragma once

#include <stdexcept>
#include <string>

namespace mpgd {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A value lies outside the admissible range of a mode, parameter or patch.
class RangeError : public Error {
public:
  using Error::Error;
};

/// Inconsistent sizes, unknown labels or malformed definitions.
class SchemaError : public Error {
public:
  using Error::Error;
};

/// Non-positive Jacobian determinant or otherwise invalid geometry.
class GeometryError : public Error {
public:
  using Error::Error;
};

/// Singular or ill-posed linear systems.
class SolverError : public Error {
public:
  using Error::Error;
};

/// Corrupted or incompatible catalog files.
class FormatError : public Error {
public:
  using Error::Error;
};

}  // namespace mpgd
