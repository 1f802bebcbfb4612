#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wip {

/// Base class for every error raised by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// An argument lies outside the domain of a map (e.g. log with |theta| >= 2 pi).
class DomainError : public Error
{
public:
  using Error::Error;
};

/// The implicit velocity update did not reach its tolerance.
class NewtonDivergence : public Error
{
public:
  NewtonDivergence(const std::string & what, double residual)
      : Error(what), residual_(residual)
  {}
  double residual() const noexcept { return residual_; }

private:
  double residual_;
};

/// Newton Jacobian of the velocity update is singular.
class SingularJacobian : public Error
{
public:
  using Error::Error;
};

/// The 6x6 costate block system could not be solved.
class SingularAdjointSystem : public Error
{
public:
  SingularAdjointSystem(const std::string & what, double rcond) : Error(what), rcond_(rcond) {}
  double rcond() const noexcept { return rcond_; }

private:
  double rcond_;
};

/// A rollout or shooting segment failed at a given step index.
class IntegratorFailure : public Error
{
public:
  IntegratorFailure(const std::string & what, std::size_t step) : Error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

private:
  std::size_t step_;
};

/// Malformed configuration or data file; `field()` names the offending key.
class ParseError : public Error
{
public:
  ParseError(const std::string & what, std::string field) : Error(what), field_(std::move(field)) {}
  const std::string & field() const noexcept { return field_; }

private:
  std::string field_;
};

}  // namespace wip
