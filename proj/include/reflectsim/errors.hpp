#ifndef REFLECTSIM_ERRORS_HPP_
#define REFLECTSIM_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace reflectsim {

// Bad user input: dimensions, malformed files, out-of-range values.
class InvalidArgument : public std::invalid_argument {
 public:
  explicit InvalidArgument(const std::string& what)
      : std::invalid_argument(what) {}
};

// Coincident points, antiparallel bisectors and similar geometric dead ends.
class DegenerateGeometry : public std::runtime_error {
 public:
  explicit DegenerateGeometry(const std::string& what)
      : std::runtime_error(what) {}
};

// No focal point in the search box satisfies the tile angle limits.
class EmptyFeasibleRegion : public std::runtime_error {
 public:
  explicit EmptyFeasibleRegion(const std::string& what)
      : std::runtime_error(what) {}
};

// An API was called out of contract (off-boundary allocation, reused tape...).
class ProtocolViolation : public std::logic_error {
 public:
  explicit ProtocolViolation(const std::string& what)
      : std::logic_error(what) {}
};

// Non-finite actions handed to the environment.
class InvalidAction : public std::runtime_error {
 public:
  explicit InvalidAction(const std::string& what)
      : std::runtime_error(what) {}
};

// Non-finite gradients; the parameter set was left untouched.
class UpdateRejected : public std::runtime_error {
 public:
  explicit UpdateRejected(const std::string& what)
      : std::runtime_error(what) {}
};

// A replayed trace stopped matching the recorded rewards.
class ReplayDivergence : public std::runtime_error {
 public:
  ReplayDivergence(const std::string& what, long step)
      : std::runtime_error(what), first_bad_step(step) {}
  long first_bad_step;
};

}  // namespace reflectsim

#endif  // REFLECTSIM_ERRORS_HPP_
