#pragma once

#include <vector>

#include <Eigen/Core>

namespace mpctune::mpc {

/// min 1/2 u^T H u + g^T u   s.t.  G u <= w
///
/// `constant` carries the part of the MPC cost that does not depend on u, so
/// that 1/2 u^T H u + g^T u + constant reproduces the horizon cost exactly.
struct QPProblem {
  Eigen::MatrixXd h;
  Eigen::VectorXd g;
  Eigen::MatrixXd G;
  Eigen::VectorXd w;
  double constant = 0.0;

  Eigen::Index num_vars() const { return h.rows(); }
  Eigen::Index num_constraints() const { return G.rows(); }
  double objective(const Eigen::VectorXd& u) const { return 0.5 * u.dot(h * u) + g.dot(u); }
};

struct KktResidual {
  double stationarity = 0.0;     // ||H u + g + G^T lambda||_inf
  double primal = 0.0;           // max(0, max(G u - w))
  double dual = 0.0;             // max(0, -min(lambda))
  double complementarity = 0.0;  // max |lambda_i (G_i u - w_i)|

  double max() const;
};

struct QPSolution {
  Eigen::VectorXd u;
  Eigen::VectorXd lambda;  // one multiplier per constraint row
  std::vector<int> active_set;
  double objective = 0.0;
  int iterations = 0;
  KktResidual kkt;
};

KktResidual kkt_residual(const QPProblem& qp, const Eigen::VectorXd& u, const Eigen::VectorXd& lambda);

/// Goldfarb-Idnani dual active-set solver.
///
/// The Cholesky factor of H is computed once per solver instance; `solve`
/// only needs the linear term and the constraint bound, so controllers whose
/// Hessian and constraint matrix are fixed reuse the factorisation across
/// receding-horizon steps.
///
/// Throws InfeasibleError (with a Farkas certificate) when G u <= w is empty,
/// NumericError when H is not positive definite or the iteration limit is hit.
class DualActiveSetSolver {
 public:
  DualActiveSetSolver(const Eigen::MatrixXd& h, const Eigen::MatrixXd& G);

  QPSolution solve(const Eigen::VectorXd& g, const Eigen::VectorXd& w) const;

  const Eigen::MatrixXd& hessian() const { return h_; }
  const Eigen::MatrixXd& constraints() const { return G_; }

 private:
  Eigen::MatrixXd h_;
  Eigen::MatrixXd G_;
  Eigen::MatrixXd j0_;  // L^{-T}, with H = L L^T
};

QPSolution solve_qp(const QPProblem& qp);

}  // namespace mpctune::mpc
