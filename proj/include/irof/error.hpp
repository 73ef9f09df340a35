#pragma once

#include <stdexcept>
#include <string>

namespace irof {

/// Base class for every error raised by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error
{
public:
  using Error::Error;
};

/// Intersection of two boxes that provably contain the same point came out empty.
class EmptyIntersection : public Error
{
public:
  using Error::Error;
};

/// A propagated interval has lo > hi somewhere.
class IntervalInversion : public Error
{
public:
  IntervalInversion(const std::string & what, int step = -1) : Error(what), step_(step) {}
  /// Prediction step at which the inversion appeared, -1 when not applicable.
  int step() const { return step_; }

private:
  int step_;
};

/// rho(M) >= 1 for a matrix that has to be Schur stable.
class SpectralConditionViolated : public Error
{
public:
  SpectralConditionViolated(const std::string & what, double radius) : Error(what), radius_(radius) {}
  double radius() const { return radius_; }

private:
  double radius_;
};

/// Non-finite value returned by a user callback.
class NonFiniteEvaluation : public Error
{
public:
  NonFiniteEvaluation(const std::string & what, int index) : Error(what), index_(index) {}
  int index() const { return index_; }

private:
  int index_;
};

/// Controller could not produce a feasible input.
class ControllerAbort : public Error
{
public:
  using Error::Error;
};

}  // namespace irof
