#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace foldlab {

/// Input outside the domain of a formula (x = y for a singular phase, r <= 0, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Mismatched dimensions or otherwise malformed arguments.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A grid too coarse for the oscillation it has to resolve.
class ResolutionError : public std::invalid_argument {
 public:
  ResolutionError(const std::string& what, std::size_t required_points)
      : std::invalid_argument(what), required_points_(required_points) {}
  std::size_t required_points() const noexcept { return required_points_; }

 private:
  std::size_t required_points_;
};

/// An iterative estimate that did not reach its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace foldlab
