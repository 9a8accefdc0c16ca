#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "mpctune/errors.hpp"
#include "mpctune/qp.hpp"

// Goldfarb & Idnani, "A numerically stable dual method for solving strictly
// convex quadratic programs", Math. Programming 27 (1983).
//
// Internally the constraints are written n_i^T x >= b_i with n_i = -G_i^T and
// b_i = -w_i. J and R satisfy J J^T = H^{-1} and J^T N_A = [R; 0] for the
// matrix N_A of active normals.

namespace mpctune::mpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Factor {
  Eigen::MatrixXd j;
  Eigen::MatrixXd r;
  int q = 0;
};

void rotate_columns(Eigen::MatrixXd& m, Eigen::Index a, Eigen::Index b, double c, double s) {
  const Eigen::VectorXd ca = m.col(a);
  const Eigen::VectorXd cb = m.col(b);
  m.col(a) = c * ca + s * cb;
  m.col(b) = -s * ca + c * cb;
}

// Appends the constraint whose transformed normal is d = J^T n_p. Returns false
// if the new normal is linearly dependent on the active ones.
bool add_constraint(Factor& f, Eigen::VectorXd d) {
  const Eigen::Index n = f.j.rows();
  for (Eigen::Index k = n - 1; k > f.q; --k) {
    const double h = std::hypot(d(k - 1), d(k));
    if (h == 0.0) continue;
    const double c = d(k - 1) / h;
    const double s = d(k) / h;
    d(k - 1) = h;
    d(k) = 0.0;
    rotate_columns(f.j, k - 1, k, c, s);
  }
  f.r.col(f.q).head(f.q + 1) = d.head(f.q + 1);
  f.r.col(f.q).tail(n - f.q - 1).setZero();
  ++f.q;
  return std::abs(d(f.q - 1)) > 1e-14 * std::max(1.0, d.head(f.q).cwiseAbs().maxCoeff());
}

// Removes active position k and restores the triangular form of R.
void drop_constraint(Factor& f, int k) {
  const Eigen::Index n = f.r.rows();
  for (int c = k; c < f.q - 1; ++c) f.r.col(c) = f.r.col(c + 1);
  f.r.col(f.q - 1).setZero();
  --f.q;
  for (int c = k; c < f.q; ++c) {
    const double a = f.r(c, c);
    const double b = f.r(c + 1, c);
    const double h = std::hypot(a, b);
    if (h == 0.0) continue;
    const double cs = a / h;
    const double sn = b / h;
    for (Eigen::Index col = c; col < f.q; ++col) {
      const double ra = f.r(c, col);
      const double rb = f.r(c + 1, col);
      f.r(c, col) = cs * ra + sn * rb;
      f.r(c + 1, col) = -sn * ra + cs * rb;
    }
    f.r(c + 1, c) = 0.0;
    rotate_columns(f.j, c, c + 1, cs, sn);
  }
  (void)n;
}

}  // namespace

double KktResidual::max() const {
  return std::max({stationarity, primal, dual, complementarity});
}

namespace {

KktResidual kkt_of(const Eigen::MatrixXd& h, const Eigen::VectorXd& g, const Eigen::MatrixXd& G,
                   const Eigen::VectorXd& w, const Eigen::VectorXd& u, const Eigen::VectorXd& lambda) {
  KktResidual res;
  Eigen::VectorXd grad = h * u + g;
  if (G.rows() > 0) {
    grad += G.transpose() * lambda;
    const Eigen::VectorXd slack = G * u - w;
    res.primal = std::max(0.0, slack.maxCoeff());
    res.dual = std::max(0.0, -lambda.minCoeff());
    res.complementarity = (lambda.array() * slack.array()).abs().maxCoeff();
  }
  res.stationarity = grad.size() > 0 ? grad.cwiseAbs().maxCoeff() : 0.0;
  return res;
}

}  // namespace

KktResidual kkt_residual(const QPProblem& qp, const Eigen::VectorXd& u, const Eigen::VectorXd& lambda) {
  return kkt_of(qp.h, qp.g, qp.G, qp.w, u, lambda);
}

DualActiveSetSolver::DualActiveSetSolver(const Eigen::MatrixXd& h, const Eigen::MatrixXd& G)
    : h_(h), G_(G) {
  if (h.rows() != h.cols()) throw PreconditionError("QP Hessian is not square");
  if (G.rows() > 0 && G.cols() != h.rows()) throw PreconditionError("QP constraint matrix has wrong width");
  if (!h.allFinite() || !G.allFinite()) throw PreconditionError("QP data is not finite");
  const Eigen::LLT<Eigen::MatrixXd> llt(h);
  if (llt.info() != Eigen::Success) throw NumericError("QP Hessian is not positive definite");
  const Eigen::MatrixXd l = llt.matrixL();
  if (l.diagonal().minCoeff() <= 0.0) throw NumericError("QP Hessian is not positive definite");
  const Eigen::Index n = h.rows();
  j0_ = l.transpose().triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(n, n));
}

QPSolution DualActiveSetSolver::solve(const Eigen::VectorXd& g, const Eigen::VectorXd& w) const {
  const Eigen::Index n = h_.rows();
  const Eigen::Index m = G_.rows();
  if (g.size() != n || w.size() != m) throw PreconditionError("QP vector sizes do not match");

  Factor f{j0_, Eigen::MatrixXd::Zero(n, n), 0};
  std::vector<int> active;
  Eigen::VectorXd mult(n + 1);  // multipliers of the active set (+1 slot for p)
  std::vector<char> is_active(static_cast<std::size_t>(m), 0);

  Eigen::VectorXd x = -(f.j * (f.j.transpose() * g));
  const int max_iter = static_cast<int>(10 * (n + m)) + 50;
  int iter = 0;

  auto slack_of = [&](Eigen::Index i) { return w(i) - G_.row(i).dot(x); };  // n_i^T x - b_i

  for (;;) {
    // Step 1: most violated inactive constraint.
    Eigen::Index p = -1;
    double s_p = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (is_active[static_cast<std::size_t>(i)]) continue;
      const double s = slack_of(i);
      const double tol = 1e-12 * std::max({1.0, std::abs(w(i)), G_.row(i).cwiseAbs().maxCoeff() * x.cwiseAbs().maxCoeff()});
      if (s < -tol && s < s_p) {
        s_p = s;
        p = i;
      }
    }
    if (p < 0) break;

    const Eigen::VectorXd np = -G_.row(p).transpose();
    double mult_p = 0.0;

    // Step 2: move towards satisfying constraint p.
    for (;;) {
      if (++iter > max_iter) {
        std::ostringstream os;
        os << "QP iteration limit " << max_iter << " exceeded";
        throw NumericError(os.str());
      }
      const Eigen::VectorXd d = f.j.transpose() * np;
      const Eigen::VectorXd z = f.j.rightCols(n - f.q) * d.tail(n - f.q);
      Eigen::VectorXd r(f.q);
      if (f.q > 0)
        r = f.r.topLeftCorner(f.q, f.q).triangularView<Eigen::Upper>().solve(d.head(f.q));

      double t1 = kInf;
      int drop = -1;
      for (int k = 0; k < f.q; ++k) {
        if (r(k) > 0.0) {
          const double ratio = mult(k) / r(k);
          if (ratio < t1) {
            t1 = ratio;
            drop = k;
          }
        }
      }
      double t2 = kInf;
      const double dz = d.tail(n - f.q).norm();
      if (dz > 1e-10 * std::max(1.0, d.norm())) t2 = -s_p / z.dot(np);

      const double t = std::min(t1, t2);
      if (t == kInf) {
        Eigen::VectorXd cert = Eigen::VectorXd::Zero(m);
        cert(p) = 1.0;
        for (int k = 0; k < f.q; ++k) cert(active[static_cast<std::size_t>(k)]) = -r(k);
        throw InfeasibleError("QP constraints are infeasible", cert);
      }

      if (t2 == kInf) {
        // Dual step only.
        mult.head(f.q) -= t * r;
        mult_p += t;
        is_active[static_cast<std::size_t>(active[static_cast<std::size_t>(drop)])] = 0;
        active.erase(active.begin() + drop);
        for (int k = drop; k < f.q - 1; ++k) mult(k) = mult(k + 1);
        drop_constraint(f, drop);
        continue;
      }

      x += t * z;
      mult.head(f.q) -= t * r;
      mult_p += t;

      if (t == t2) {
        if (!add_constraint(f, d)) throw NumericError("QP active constraints became linearly dependent");
        active.push_back(static_cast<int>(p));
        is_active[static_cast<std::size_t>(p)] = 1;
        mult(f.q - 1) = mult_p;
        break;
      }
      is_active[static_cast<std::size_t>(active[static_cast<std::size_t>(drop)])] = 0;
      active.erase(active.begin() + drop);
      for (int k = drop; k < f.q - 1; ++k) mult(k) = mult(k + 1);
      drop_constraint(f, drop);
      s_p = slack_of(p);
    }
  }

  QPSolution sol;
  sol.u = x;
  sol.lambda = Eigen::VectorXd::Zero(m);
  for (int k = 0; k < f.q; ++k) sol.lambda(active[static_cast<std::size_t>(k)]) = std::max(0.0, mult(k));
  sol.active_set = active;
  std::sort(sol.active_set.begin(), sol.active_set.end());
  sol.objective = 0.5 * x.dot(h_ * x) + g.dot(x);
  sol.iterations = iter;
  sol.kkt = kkt_of(h_, g, G_, w, sol.u, sol.lambda);
  return sol;
}

QPSolution solve_qp(const QPProblem& qp) {
  const DualActiveSetSolver solver(qp.h, qp.G.rows() > 0 ? qp.G : Eigen::MatrixXd(0, qp.h.rows()));
  return solver.solve(qp.g, qp.w.size() > 0 ? qp.w : Eigen::VectorXd(0));
}

}  // namespace mpctune::mpc
