#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace randswitch {

// Precondition violations (bad arguments) surface as std::invalid_argument.
// Numerical failures derive from NumericalError so callers can separate the
// two (the CLI maps them to exit codes 2 and 3).

class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class InfeasibleMoments : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class NonConvergence : public NumericalError {
public:
  using NumericalError::NumericalError;
};

class SingularSystem : public NumericalError {
public:
  using NumericalError::NumericalError;
};

class UnstableSystem : public NumericalError {
public:
  using NumericalError::NumericalError;
};

class NumericalDivergence : public NumericalError {
public:
  NumericalDivergence(std::size_t pulse_index, const std::string& what)
      : NumericalError(what + " (pulse " + std::to_string(pulse_index) + ")"),
        pulse_index_(pulse_index) {}

  std::size_t pulse_index() const noexcept { return pulse_index_; }

private:
  std::size_t pulse_index_;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

}  // namespace detail
}  // namespace randswitch
