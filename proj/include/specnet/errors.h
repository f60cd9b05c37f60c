#pragma once

#include <stdexcept>
#include <string>

namespace specnet {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class DomainError : public Error {
public:
  using Error::Error;
};

class DimensionMismatch : public Error {
public:
  using Error::Error;
};

/// Batch variance of a candidate eigenfunction fell below the floor.
class DegenerateVariance : public Error {
public:
  DegenerateVariance(const std::string &what, double variance)
      : Error(what), variance_(variance) {}
  double variance() const { return variance_; }

private:
  double variance_;
};

/// Euler-Maruyama trajectory produced a non-finite state.
class DivergedTrajectory : public Error {
public:
  DivergedTrajectory(const std::string &what, long long step)
      : Error(what), step_(step) {}
  long long step() const { return step_; }

private:
  long long step_;
};

class NonConvergence : public Error {
public:
  using Error::Error;
};

class NonFiniteLoss : public Error {
public:
  NonFiniteLoss(const std::string &what, long long step)
      : Error(what), step_(step) {}
  long long step() const { return step_; }

private:
  long long step_;
};

class FormatError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

} // namespace specnet
