#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace frobflat {

class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what, std::string stage = {})
      : std::runtime_error(what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }
  void set_stage(std::string s) { stage_ = std::move(s); }

private:
  std::string stage_;
};

class ShapeError : public Error {
public:
  using Error::Error;
};

class PreconditionError : public Error {
public:
  using Error::Error;
};

class SingularityError : public Error {
public:
  SingularityError(const std::string& what, double sigma)
      : Error(what), sigma_(sigma) {}
  double singular_value() const { return sigma_; }

private:
  double sigma_;
};

class ResolutionError : public Error {
public:
  using Error::Error;
};

// I+M not invertible on the requested ball; carries the best radius found.
class DomainShrinkError : public Error {
public:
  DomainShrinkError(const std::string& what, double radius)
      : Error(what), radius_(radius) {}
  double feasible_radius() const { return radius_; }

private:
  double radius_;
};

class DivergenceError : public Error {
public:
  DivergenceError(const std::string& what, std::vector<double> ratios)
      : Error(what), ratios_(std::move(ratios)) {}
  const std::vector<double>& ratios() const { return ratios_; }

private:
  std::vector<double> ratios_;
};

class StepError : public Error {
public:
  StepError(const std::string& what, double suggested)
      : Error(what), suggested_(suggested) {}
  double suggested_radius() const { return suggested_; }

private:
  double suggested_;
};

class ProvenanceError : public Error {
public:
  using Error::Error;
};

}  // namespace frobflat
