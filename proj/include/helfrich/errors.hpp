#pragma once

#include <stdexcept>
#include <string>

namespace helfrich {

/// Curvature profile parameters violate the profile invariants.
class InvalidProfileError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operation requires a parametrised (TypeI/TypeII) profile.
class UnsupportedProfileError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Boundary specification or problem definition is malformed.
class InvalidProblemError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// State with x1 <= 0 where the equations divide by x1.
class SingularStateError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class OutOfDomainError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Unrecognised name for a rescaling relation or similar lookup.
class UnknownSelectorError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class InsufficientDataError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The Newton linear system could not be factorised.
class SingularSystemError : public std::runtime_error {
 public:
  SingularSystemError(int iteration, const std::string& what)
      : std::runtime_error(what + " (Newton iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}

  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

}  // namespace helfrich
