#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "mpctune/errors.hpp"
#include "mpctune/gain_tuner.hpp"
#include "mpctune/linalg.hpp"

namespace mpctune::tuner {

namespace {

void require_symmetric(const Eigen::MatrixXd& s) {
  if (s.rows() != s.cols() || s.rows() == 0) throw PreconditionError("projection needs a nonempty square matrix");
  if (!s.allFinite()) throw NumericError("projection of a non-finite matrix");
  const double tol = 1e-12 * std::max(1.0, s.cwiseAbs().maxCoeff());
  if ((s - s.transpose()).cwiseAbs().maxCoeff() > tol) throw PreconditionError("projection of a non-symmetric matrix");
}

// V max(L, floor) V^T, then a diagonal shift until sym_eigmin agrees.
Eigen::MatrixXd clip_spectrum(const Eigen::MatrixXd& s, double floor) {
  require_symmetric(s);
  const Eigen::MatrixXd sym = 0.5 * (s + s.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
  const Eigen::VectorXd lam = es.eigenvalues().cwiseMax(floor);
  Eigen::MatrixXd out = sym;
  if (lam != es.eigenvalues()) {
    out = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
    out = 0.5 * (out + out.transpose()).eval();
  }
  const double ulp = std::numeric_limits<double>::epsilon() * std::max(1.0, out.cwiseAbs().maxCoeff());
  for (int k = 0; k < 8; ++k) {
    const double e = linalg::sym_eigmin(out);
    if (e >= floor) return out;
    out.diagonal().array() += (floor - e) + ulp * (1 << k);
  }
  throw NumericError("cone projection could not be certified");
}

}  // namespace

Eigen::MatrixXd random_orthogonal(int n, std::mt19937_64& rng) {
  if (n < 1) throw PreconditionError("random_orthogonal: n must be >= 1");
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd z(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) z(i, j) = nd(rng);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(z);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < n; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

Eigen::MatrixXd random_symmetric_direction(int n, std::mt19937_64& rng) {
  const Eigen::MatrixXd q = random_orthogonal(n, rng);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::VectorXd lam(n);
  for (int i = 0; i < n; ++i) lam(i) = nd(rng);
  const Eigen::MatrixXd m = q.transpose() * lam.asDiagonal() * q;
  return 0.5 * (m + m.transpose());
}

Eigen::MatrixXd project_psd(const Eigen::MatrixXd& s) { return clip_spectrum(s, 0.0); }

Eigen::MatrixXd project_pd(const Eigen::MatrixXd& s, double d) {
  if (!(d > 0.0) || !std::isfinite(d)) throw PreconditionError("project_pd: floor d must be > 0");
  return clip_spectrum(s, d);
}

DirectionTriple DirectionTriple::random(int nx, int nu, std::mt19937_64& rng) {
  DirectionTriple t;
  t.p = random_symmetric_direction(nx, rng);
  t.q = random_symmetric_direction(nx, rng);
  t.r = random_symmetric_direction(nu, rng);
  return t;
}

DirectionTriple DirectionTriple::zeros(int nx, int nu) {
  return {Eigen::MatrixXd::Zero(nx, nx), Eigen::MatrixXd::Zero(nx, nx), Eigen::MatrixXd::Zero(nu, nu)};
}

double DirectionTriple::frobenius_norm() const {
  return std::sqrt(p.squaredNorm() + q.squaredNorm() + r.squaredNorm());
}

}  // namespace mpctune::tuner
