#pragma once

#include <stdexcept>
#include <string>

namespace del {

/// Shape or value violation in tensor arithmetic (mismatched extents,
/// non-finite results, bad indices).
class TensorError : public std::runtime_error {
 public:
  explicit TensorError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid parameter for a density or layer (e.g. non-positive scale).
class ParamError : public std::runtime_error {
 public:
  explicit ParamError(const std::string& what) : std::runtime_error(what) {}
};

/// Adaptive quadrature failed to reach the requested tolerance.
class QuadratureError : public std::runtime_error {
 public:
  QuadratureError(const std::string& what, double achieved_tolerance)
      : std::runtime_error(what), achieved_tolerance(achieved_tolerance) {}
  double achieved_tolerance;
};

/// Training aborted on a non-finite loss or gradient.
class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed or unreadable dataset / checkpoint file.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace del
