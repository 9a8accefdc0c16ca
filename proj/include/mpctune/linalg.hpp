#pragma once

// Small dense helpers shared by the plant, controller and tuner modules.

#include <Eigen/Core>

namespace mpctune::linalg {

/// Smallest eigenvalue of a symmetric matrix (lower triangle is read).
double sym_eigmin(const Eigen::MatrixXd& s);

double spectral_radius(const Eigen::MatrixXd& a);

/// Stabilising solution of the discrete algebraic Riccati equation by fixed-point
/// iteration. Returns false if the iteration does not converge.
bool solve_dare(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::MatrixXd& q,
                const Eigen::MatrixXd& r, Eigen::MatrixXd& p, int max_iter = 20000);

/// Feedback K of u = -K x for the DARE solution p.
Eigen::MatrixXd dare_gain(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                          const Eigen::MatrixXd& r, const Eigen::MatrixXd& p);

}  // namespace mpctune::linalg
