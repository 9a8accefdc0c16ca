#pragma once

#include <optional>

#include <Eigen/Core>

#include "mpctune/gain_set.hpp"
#include "mpctune/plant_model.hpp"
#include "mpctune/qp.hpp"

namespace mpctune::mpc {

/// Discrete LTI prediction model x(k+1) = A x(k) + B u(k) in perturbation coordinates.
struct LinearModel {
  Eigen::MatrixXd a;
  Eigen::MatrixXd b;
};

/// Box bounds in perturbation coordinates; +-infinity entries produce no rows.
struct PerturbationBoxes {
  Eigen::VectorXd x_lo, x_hi;
  Eigen::VectorXd u_lo, u_hi;

  static PerturbationBoxes unbounded(int nx, int nu);
  /// Physical boxes shifted by the steady-state target.
  static PerturbationBoxes shifted(const plant::PlantConfig& cfg, const plant::StateVec& x_star,
                                   const plant::InputVec& u_star);
};

/// Prediction matrices of the condensed formulation:
///   X = Phi x0 + Gamma U,   X = (x(1), ..., x(N)),  U = (u(0), ..., u(N-1)).
struct Prediction {
  Eigen::MatrixXd phi;
  Eigen::MatrixXd gamma;
};

Prediction build_prediction(const LinearModel& model, int horizon);

/// Condensed QP of the horizon cost
///   J = x(N)' P x(N) + sum_{i<N} x(i)' Q x(i) + u(i)' R u(i)
/// such that 1/2 U'HU + g'U + constant == J.
QPProblem condense(const LinearModel& model, const GainSet& gains, const Eigen::VectorXd& x0,
                   const PerturbationBoxes& boxes);

QPProblem condense(const plant::RegionModel& region, const GainSet& gains,
                   const Eigen::VectorXd& x0, const PerturbationBoxes& boxes);

/// Horizon cost by direct summation. x_traj holds N+1 columns, u_seq N columns.
double evaluate_cost(const Eigen::MatrixXd& x_traj, const Eigen::MatrixXd& u_seq, const GainSet& gains);

/// Condensed MPC with the Hessian factorisation cached for a fixed gain set.
/// Only `target`-dependent bounds and the x0-dependent linear term change
/// between steps. Not safe for concurrent stepping of one instance.
class CondensedMpc {
 public:
  CondensedMpc(const LinearModel& model, const GainSet& gains, const PerturbationBoxes& boxes);

  void set_boxes(const PerturbationBoxes& boxes);
  QPProblem problem(const Eigen::VectorXd& x0) const;
  QPSolution solve(const Eigen::VectorXd& x0) const;

  int horizon() const { return horizon_; }
  int input_dim() const { return nu_; }
  /// Magnitude of the Hessian entries; KKT tolerances are taken relative to it.
  double problem_scale() const { return h_.cwiseAbs().maxCoeff(); }

 private:
  void rebuild_constraints();

  LinearModel model_;
  GainSet gains_;
  PerturbationBoxes boxes_;
  int horizon_ = 0;
  int nx_ = 0, nu_ = 0;
  Prediction pred_;
  Eigen::MatrixXd h_;
  Eigen::MatrixXd f_;        // g = f_ x0
  Eigen::MatrixXd qbar_phi_; // for the cost constant
  Eigen::MatrixXd G_;
  Eigen::VectorXd w0_;       // w = w0_ + wx_ x0
  Eigen::MatrixXd wx_;
  std::optional<DualActiveSetSolver> solver_;
};

/// Receding-horizon controller of one region of the switched MPC.
class MpcController {
 public:
  MpcController(const plant::RegionModel& region, const GainSet& gains, const plant::PlantConfig& cfg);

  /// Steady-state target the controller regulates to (defaults to the region's).
  void set_target(const plant::StateVec& x_star, const plant::InputVec& u_star);

  /// Applied input u_star + u~*(0), clipped to the input box.
  /// Throws ControllerFault when the QP cannot be solved.
  plant::InputVec step(const plant::StateVec& x_sample);

  const QPSolution& last_solution() const { return last_; }
  int region_index() const { return region_index_; }
  const plant::StateVec& x_target() const { return x_star_; }
  const plant::InputVec& u_target() const { return u_star_; }

 private:
  int region_index_;
  const plant::PlantConfig* cfg_;
  plant::StateVec x_star_;
  plant::InputVec u_star_;
  CondensedMpc mpc_;
  QPSolution last_;
};

/// One-shot convenience: a fresh controller, one step.
plant::InputVec mpc_step(const plant::StateVec& x_sample, const plant::RegionModel& region,
                         const GainSet& gains, const plant::PlantConfig& cfg);

}  // namespace mpctune::mpc
