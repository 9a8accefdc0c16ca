#include <cmath>
#include <limits>

#include "mpctune/errors.hpp"
#include "mpctune/mpc_controller.hpp"

namespace mpctune::mpc {

namespace {

void check_dims(const LinearModel& model, const GainSet& gains) {
  const auto nx = model.a.rows();
  if (model.a.cols() != nx || model.b.rows() != nx)
    throw PreconditionError("prediction model has inconsistent dimensions");
  if (gains.p.rows() != nx || gains.r.rows() != model.b.cols())
    throw PreconditionError("gain dimensions do not match the model");
}

Eigen::MatrixXd stage_weights(const GainSet& gains) {
  const int nx = gains.state_dim();
  const int n = gains.horizon;
  Eigen::MatrixXd qbar = Eigen::MatrixXd::Zero(nx * n, nx * n);
  for (int i = 0; i + 1 < n; ++i) qbar.block(i * nx, i * nx, nx, nx) = gains.q;
  qbar.block((n - 1) * nx, (n - 1) * nx, nx, nx) = gains.p;
  return qbar;
}

}  // namespace

PerturbationBoxes PerturbationBoxes::unbounded(int nx, int nu) {
  const double inf = std::numeric_limits<double>::infinity();
  return {Eigen::VectorXd::Constant(nx, -inf), Eigen::VectorXd::Constant(nx, inf),
          Eigen::VectorXd::Constant(nu, -inf), Eigen::VectorXd::Constant(nu, inf)};
}

PerturbationBoxes PerturbationBoxes::shifted(const plant::PlantConfig& cfg, const plant::StateVec& x_star,
                                             const plant::InputVec& u_star) {
  return {cfg.state_box.lo - x_star, cfg.state_box.hi - x_star, cfg.input_box.lo - u_star,
          cfg.input_box.hi - u_star};
}

Prediction build_prediction(const LinearModel& model, int horizon) {
  const auto nx = model.a.rows();
  const auto nu = model.b.cols();
  Prediction pred;
  pred.phi.resize(nx * horizon, nx);
  pred.gamma = Eigen::MatrixXd::Zero(nx * horizon, nu * horizon);
  // powers[k] = A^k B
  std::vector<Eigen::MatrixXd> powers_b;
  Eigen::MatrixXd apow = Eigen::MatrixXd::Identity(nx, nx);
  for (int i = 0; i < horizon; ++i) {
    powers_b.push_back(apow * model.b);
    apow = model.a * apow;
    pred.phi.block(i * nx, 0, nx, nx) = apow;
  }
  for (int i = 1; i <= horizon; ++i)
    for (int j = 0; j < i; ++j)
      pred.gamma.block((i - 1) * nx, j * nu, nx, nu) = powers_b[static_cast<std::size_t>(i - 1 - j)];
  return pred;
}

QPProblem condense(const LinearModel& model, const GainSet& gains, const Eigen::VectorXd& x0,
                   const PerturbationBoxes& boxes) {
  return CondensedMpc(model, gains, boxes).problem(x0);
}

QPProblem condense(const plant::RegionModel& region, const GainSet& gains, const Eigen::VectorXd& x0,
                   const PerturbationBoxes& boxes) {
  return condense(LinearModel{region.a, region.b}, gains, x0, boxes);
}

double evaluate_cost(const Eigen::MatrixXd& x_traj, const Eigen::MatrixXd& u_seq, const GainSet& gains) {
  const int n = gains.horizon;
  if (x_traj.cols() != n + 1 || u_seq.cols() != n)
    throw PreconditionError("evaluate_cost: trajectory must have N+1 states and N inputs");
  if (x_traj.rows() != gains.p.rows() || u_seq.rows() != gains.r.rows())
    throw PreconditionError("evaluate_cost: dimension mismatch");
  double j = x_traj.col(n).dot(gains.p * x_traj.col(n));
  for (int i = 0; i < n; ++i)
    j += x_traj.col(i).dot(gains.q * x_traj.col(i)) + u_seq.col(i).dot(gains.r * u_seq.col(i));
  return j;
}

CondensedMpc::CondensedMpc(const LinearModel& model, const GainSet& gains, const PerturbationBoxes& boxes)
    : model_(model), gains_(gains), boxes_(boxes) {
  check_dims(model, gains);
  gains.validate();
  horizon_ = gains.horizon;
  nx_ = static_cast<int>(model.a.rows());
  nu_ = static_cast<int>(model.b.cols());
  pred_ = build_prediction(model, horizon_);
  const Eigen::MatrixXd qbar = stage_weights(gains);
  Eigen::MatrixXd rbar = Eigen::MatrixXd::Zero(nu_ * horizon_, nu_ * horizon_);
  for (int i = 0; i < horizon_; ++i) rbar.block(i * nu_, i * nu_, nu_, nu_) = gains.r;
  const Eigen::MatrixXd qg = qbar * pred_.gamma;
  h_ = 2.0 * (pred_.gamma.transpose() * qg + rbar);
  h_ = 0.5 * (h_ + h_.transpose()).eval();
  f_ = 2.0 * qg.transpose() * pred_.phi;
  qbar_phi_ = gains.q + pred_.phi.transpose() * qbar * pred_.phi;
  rebuild_constraints();
}

void CondensedMpc::set_boxes(const PerturbationBoxes& boxes) {
  boxes_ = boxes;
  rebuild_constraints();
}

void CondensedMpc::rebuild_constraints() {
  const int nU = nu_ * horizon_;
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> w0;
  std::vector<Eigen::VectorXd> wx;
  const Eigen::VectorXd zero_x = Eigen::VectorXd::Zero(nx_);

  for (int i = 0; i < horizon_; ++i) {
    for (int k = 0; k < nu_; ++k) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(nU);
      e(i * nu_ + k) = 1.0;
      if (std::isfinite(boxes_.u_hi(k))) {
        rows.push_back(e);
        w0.push_back(boxes_.u_hi(k));
        wx.push_back(zero_x);
      }
      if (std::isfinite(boxes_.u_lo(k))) {
        rows.push_back(-e);
        w0.push_back(-boxes_.u_lo(k));
        wx.push_back(zero_x);
      }
    }
  }
  for (int i = 0; i < horizon_; ++i) {
    for (int k = 0; k < nx_; ++k) {
      const Eigen::Index row = i * nx_ + k;
      const Eigen::VectorXd grow = pred_.gamma.row(row).transpose();
      const Eigen::VectorXd prow = pred_.phi.row(row).transpose();
      if (std::isfinite(boxes_.x_hi(k))) {
        rows.push_back(grow);
        w0.push_back(boxes_.x_hi(k));
        wx.push_back(-prow);
      }
      if (std::isfinite(boxes_.x_lo(k))) {
        rows.push_back(-grow);
        w0.push_back(-boxes_.x_lo(k));
        wx.push_back(prow);
      }
    }
  }
  const auto m = static_cast<Eigen::Index>(rows.size());
  G_.resize(m, nU);
  w0_.resize(m);
  wx_.resize(m, nx_);
  for (Eigen::Index i = 0; i < m; ++i) {
    G_.row(i) = rows[static_cast<std::size_t>(i)].transpose();
    w0_(i) = w0[static_cast<std::size_t>(i)];
    wx_.row(i) = wx[static_cast<std::size_t>(i)].transpose();
  }
  if (solver_ && solver_->constraints().rows() == G_.rows() && solver_->constraints() == G_) return;
  solver_.reset();
  solver_.emplace(h_, G_);
}

QPProblem CondensedMpc::problem(const Eigen::VectorXd& x0) const {
  if (x0.size() != nx_) throw PreconditionError("initial state has wrong dimension");
  QPProblem qp;
  qp.h = h_;
  qp.g = f_ * x0;
  qp.G = G_;
  qp.w = w0_ + wx_ * x0;
  qp.constant = x0.dot(qbar_phi_ * x0);
  return qp;
}

QPSolution CondensedMpc::solve(const Eigen::VectorXd& x0) const {
  if (x0.size() != nx_) throw PreconditionError("initial state has wrong dimension");
  return solver_->solve(f_ * x0, w0_ + wx_ * x0);
}

}  // namespace mpctune::mpc
