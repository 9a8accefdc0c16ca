#pragma once

#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Core>

namespace mpctune {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument lies outside the box/set it must belong to.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition of an operation does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A step response whose reference does not move.
class DegenerateStepError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

/// A numerical routine failed to converge or produced non-finite values.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IntegrationError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Steady-state target solve did not reach the residual contract.
class NoSolutionError : public Error {
 public:
  NoSolutionError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// The QP constraint set G u <= w is empty. The certificate y satisfies
/// y >= 0, G^T y = 0 and w^T y < 0.
class InfeasibleError : public Error {
 public:
  InfeasibleError(const std::string& what, Eigen::VectorXd certificate)
      : Error(what), certificate_(std::move(certificate)) {}
  const Eigen::VectorXd& certificate() const { return certificate_; }

 private:
  Eigen::VectorXd certificate_;
};

/// Raised by the MPC layer when the QP of the active region cannot be solved.
class ControllerFault : public Error {
 public:
  ControllerFault(const std::string& what, int region, double kkt_residual)
      : Error(what), region_(region), kkt_residual_(kkt_residual) {}
  int region() const { return region_; }
  double kkt_residual() const { return kkt_residual_; }

 private:
  int region_;
  double kkt_residual_;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, int epoch) : Error(what), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

class TuningError : public Error {
 public:
  using Error::Error;
};

}  // namespace mpctune
