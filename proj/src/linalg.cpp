#include "mpctune/linalg.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace mpctune::linalg {

double sym_eigmin(const Eigen::MatrixXd& s) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double spectral_radius(const Eigen::MatrixXd& a) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(a, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

Eigen::MatrixXd dare_gain(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                          const Eigen::MatrixXd& r, const Eigen::MatrixXd& p) {
  const Eigen::MatrixXd s = r + b.transpose() * p * b;
  return s.ldlt().solve(b.transpose() * p * a);
}

bool solve_dare(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::MatrixXd& q,
                const Eigen::MatrixXd& r, Eigen::MatrixXd& p, int max_iter) {
  p = q;
  for (int k = 0; k < max_iter; ++k) {
    const Eigen::MatrixXd gain = dare_gain(a, b, r, p);
    Eigen::MatrixXd next = a.transpose() * p * (a - b * gain) + q;
    next = 0.5 * (next + next.transpose()).eval();
    if (!next.allFinite()) return false;
    const double change = (next - p).cwiseAbs().maxCoeff();
    p = std::move(next);
    if (change <= 1e-13 * (1.0 + p.cwiseAbs().maxCoeff())) {
      return spectral_radius(a - b * dare_gain(a, b, r, p)) < 1.0;
    }
  }
  return false;
}

}  // namespace mpctune::linalg
