#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace rdtf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (bad radius, bad ladder, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A field value is NaN or infinite.
class NonFiniteError : public Error {
 public:
  NonFiniteError(std::string what_field, std::size_t node, int component);

  std::size_t node() const noexcept { return node_; }
  int component() const noexcept { return component_; }

 private:
  std::size_t node_;
  int component_;
};

/// The metric failed the positive-definiteness test at some node.
class NotPositiveDefinite : public Error {
 public:
  NotPositiveDefinite(std::size_t node, std::vector<double> eigenvalues);

  std::size_t node() const noexcept { return node_; }
  const std::vector<double>& eigenvalues() const noexcept { return eigenvalues_; }

 private:
  std::size_t node_;
  std::vector<double> eigenvalues_;
};

/// Requested time step exceeds the explicit stability bound.
class CflViolation : public Error {
 public:
  CflViolation(double dt, double dt_max);

  double dt() const noexcept { return dt_; }
  double dt_max() const noexcept { return dt_max_; }

 private:
  double dt_;
  double dt_max_;
};

/// Malformed input files: configs, checkpoints, manifests.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace rdtf
