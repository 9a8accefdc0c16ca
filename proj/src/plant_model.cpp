#include "mpctune/plant_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Dense>

#include "mpctune/errors.hpp"
#include "mpctune/linalg.hpp"

namespace mpctune::plant {

namespace {

constexpr std::array<const char*, kStateDim> kStateNames{"p_in", "p_ex", "w_comp", "f_egr"};
constexpr std::array<const char*, kInputDim> kInputNames{"u_thr", "u_egr", "u_vgt"};

std::string bound_message(const char* name, double value, const char* side, double bound) {
  std::ostringstream os;
  os << name << " = " << value << " violates " << side << " bound " << bound;
  return os.str();
}

// Unknown vector of the steady-state solve: z = (x, u).
using SsVec = Eigen::Matrix<double, kStateDim + kInputDim, 1>;
using SsRes = Eigen::Matrix<double, kStateDim + kOutputDim, 1>;

SsRes steady_residual(const SsVec& z, const OperatingPoint& th, const OutputVec& r,
                      const PlantConfig& cfg) {
  const StateVec x = z.head<kStateDim>();
  const InputVec u = z.tail<kInputDim>();
  SsRes res;
  res.head<kStateDim>() = dynamics_unchecked(x, u, th, cfg);
  res.tail<kOutputDim>() = evaluate_output(x, u, th) - r;
  return res;
}

SsVec clamp_to_boxes(SsVec z, const PlantConfig& cfg) {
  z.head<kStateDim>() =
      z.head<kStateDim>().cwiseMax(cfg.state_box.lo).cwiseMin(cfg.state_box.hi);
  z.tail<kInputDim>() = z.tail<kInputDim>().cwiseMax(cfg.input_box.lo).cwiseMin(cfg.input_box.hi);
  return z;
}

double scaled_distance_sq(const OperatingPoint& a, const OperatingPoint& b,
                          const PlantConfig& cfg) {
  const double ds = (cfg.theta_hi.speed - cfg.theta_lo.speed) / cfg.speed_points;
  const double df = (cfg.theta_hi.fuel - cfg.theta_lo.fuel) / cfg.fuel_points;
  const double es = (a.speed - b.speed) / ds;
  const double ef = (a.fuel - b.fuel) / df;
  return es * es + ef * ef;
}

void check_theta(const OperatingPoint& th, const PlantConfig& cfg) {
  if (!(th.speed >= cfg.theta_lo.speed))
    throw DomainError(bound_message("speed", th.speed, "lower", cfg.theta_lo.speed));
  if (!(th.speed <= cfg.theta_hi.speed))
    throw DomainError(bound_message("speed", th.speed, "upper", cfg.theta_hi.speed));
  if (!(th.fuel >= cfg.theta_lo.fuel))
    throw DomainError(bound_message("fuel", th.fuel, "lower", cfg.theta_lo.fuel));
  if (!(th.fuel <= cfg.theta_hi.fuel))
    throw DomainError(bound_message("fuel", th.fuel, "upper", cfg.theta_hi.fuel));
}

}  // namespace

// --- config ---------------------------------------------------------------------

PlantConfig PlantConfig::defaults() {
  PlantConfig cfg;
  MatA core;
  core << -3.0, 1.0, 0.8, -0.5,
           0.6, -4.0, 0.0, -0.8,
           0.0, 1.2, -2.0, 0.0,
          -0.4, 0.5, 0.0, -3.5;
  // A(th) = core (0.7 + 0.6 w) + w_fuel E
  cfg.a0 = 0.7 * core;
  cfg.a_speed = 0.6 * core;
  cfg.a_fuel.setZero();
  cfg.a_fuel(kPin, kPex) = 0.4;
  cfg.a_fuel(kWcomp, kPex) = 0.5;

  MatB b_core;
  b_core << 1.5, -0.3, 0.4,
            0.2, -1.0, 1.2,
            0.3, 0.0, 0.8,
           -0.2, 1.4, -0.3;
  // B(th) = b_core (0.8 + 0.4 w_fuel)
  cfg.b0 = 0.8 * b_core;
  cfg.b_speed.setZero();
  cfg.b_fuel = 0.4 * b_core;

  cfg.x_eq0 << 1.0, 1.1, 0.5, 0.3;
  cfg.x_eq_speed << 0.15, 0.2, 0.3, 0.05;
  cfg.x_eq_fuel << 0.3, 0.35, 0.25, -0.1;
  cfg.u_eq0 << 0.55, 0.45, 0.5;
  cfg.u_eq_speed << 0.0, 0.05, 0.1;
  cfg.u_eq_fuel << 0.1, -0.1, 0.0;

  cfg.nonlinear = {0.5, 0.4, 0.6, 0.5};

  cfg.state_box.lo << 0.5, 0.5, 0.0, 0.0;
  cfg.state_box.hi << 3.0, 3.5, 2.0, 1.0;
  cfg.input_box.lo << 0.0, 0.0, 0.0;
  cfg.input_box.hi << 1.0, 1.0, 1.0;
  return cfg;
}

PlantConfig PlantConfig::linear_defaults() {
  PlantConfig cfg = defaults();
  cfg.nonlinear = {0.0, 0.0, 0.0, 0.0};
  return cfg;
}

MatA PlantConfig::a_at(const OperatingPoint& th) const {
  return a0 + th.speed * a_speed + th.fuel * a_fuel;
}
MatB PlantConfig::b_at(const OperatingPoint& th) const {
  return b0 + th.speed * b_speed + th.fuel * b_fuel;
}
StateVec PlantConfig::x_eq_at(const OperatingPoint& th) const {
  return x_eq0 + th.speed * x_eq_speed + th.fuel * x_eq_fuel;
}
InputVec PlantConfig::u_eq_at(const OperatingPoint& th) const {
  return u_eq0 + th.speed * u_eq_speed + th.fuel * u_eq_fuel;
}

void PlantConfig::validate() const {
  if (speed_points < 1 || fuel_points < 1) throw DomainError("grid sizes must be >= 1");
  if (!(sample_time > 0.0)) throw DomainError("sample_time must be > 0");
  if (rk4_substeps < 1) throw DomainError("rk4_substeps must be >= 1");
  if (!(theta_hi.speed > theta_lo.speed) || !(theta_hi.fuel > theta_lo.fuel))
    throw DomainError("theta rectangle is empty");
  if ((state_box.hi - state_box.lo).minCoeff() <= 0.0) throw DomainError("state box is empty");
  if ((input_box.hi - input_box.lo).minCoeff() <= 0.0) throw DomainError("input box is empty");
  if (state_box.lo(kFegr) < 0.0 || state_box.hi(kFegr) > 1.0)
    throw DomainError("f_egr box must lie within [0, 1]");
  if (hysteresis < 0.0) throw DomainError("hysteresis must be >= 0");
  if (output_noise_std < 0.0) throw DomainError("output_noise_std must be >= 0");
}

// --- twin -----------------------------------------------------------------------

void check_domain(const StateVec& x, const InputVec& u, const OperatingPoint& th,
                  const PlantConfig& cfg) {
  for (int i = 0; i < kStateDim; ++i) {
    if (!std::isfinite(x(i))) throw DomainError(std::string(kStateNames[i]) + " is not finite");
    if (x(i) < cfg.state_box.lo(i))
      throw DomainError(bound_message(kStateNames[i], x(i), "lower", cfg.state_box.lo(i)));
    if (x(i) > cfg.state_box.hi(i))
      throw DomainError(bound_message(kStateNames[i], x(i), "upper", cfg.state_box.hi(i)));
  }
  for (int i = 0; i < kInputDim; ++i) {
    if (!std::isfinite(u(i))) throw DomainError(std::string(kInputNames[i]) + " is not finite");
    if (u(i) < cfg.input_box.lo(i))
      throw DomainError(bound_message(kInputNames[i], u(i), "lower", cfg.input_box.lo(i)));
    if (u(i) > cfg.input_box.hi(i))
      throw DomainError(bound_message(kInputNames[i], u(i), "upper", cfg.input_box.hi(i)));
  }
  check_theta(th, cfg);
}

StateVec dynamics_unchecked(const StateVec& x, const InputVec& u, const OperatingPoint& th,
                            const PlantConfig& cfg) {
  const StateVec dx = x - cfg.x_eq_at(th);
  const InputVec du = u - cfg.u_eq_at(th);
  StateVec xdot = cfg.a_at(th) * dx + cfg.b_at(th) * du;
  const auto& c = cfg.nonlinear;
  xdot(kPin) += c[0] * dx(kPin) * du(kThrottle);
  xdot(kPex) += c[1] * dx(kPex) * du(kVgt);
  xdot(kWcomp) += c[2] * (std::tanh(dx(kWcomp)) - dx(kWcomp));
  xdot(kFegr) += c[3] * dx(kFegr) * du(kEgrValve);
  return xdot;
}

StateVec evaluate_dynamics(const StateVec& x, const InputVec& u, const OperatingPoint& th,
                           const PlantConfig& cfg) {
  check_domain(x, u, th, cfg);
  return dynamics_unchecked(x, u, th, cfg);
}

OutputVec evaluate_output(const StateVec& x, const InputVec& /*u*/, const OperatingPoint& /*th*/) {
  return OutputVec(x(kPin), x(kFegr));
}

StateVec integrate_step(const StateVec& x, const InputVec& u, const OperatingPoint& th,
                        double dt, const PlantConfig& cfg) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw DomainError("integration step dt must be > 0");
  check_domain(x, u, th, cfg);
  const StateVec next = rk4_step(x, dt, [&](const StateVec& s) {
    const StateVec d = dynamics_unchecked(s, u, th, cfg);
    if (!d.allFinite()) throw IntegrationError("non-finite derivative inside RK4 stage");
    return d;
  });
  if (!next.allFinite()) throw IntegrationError("non-finite state after RK4 step");
  return next;
}

// --- linear models ------------------------------------------------------------------

double central_difference(double x, const std::function<double(double)>& f) {
  const double h = 1e-6 * (1.0 + std::abs(x));
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

ContinuousLinearization linearize_at(const StateVec& x, const InputVec& u,
                                     const OperatingPoint& th, const PlantConfig& cfg) {
  ContinuousLinearization lin;
  for (int j = 0; j < kStateDim; ++j) {
    const double h = 1e-6 * (1.0 + std::abs(x(j)));
    StateVec xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    lin.a.col(j) = (dynamics_unchecked(xp, u, th, cfg) - dynamics_unchecked(xm, u, th, cfg)) / (2 * h);
    lin.c.col(j) = (evaluate_output(xp, u, th) - evaluate_output(xm, u, th)) / (2 * h);
  }
  for (int j = 0; j < kInputDim; ++j) {
    const double h = 1e-6 * (1.0 + std::abs(u(j)));
    InputVec up = u, um = u;
    up(j) += h;
    um(j) -= h;
    lin.b.col(j) = (dynamics_unchecked(x, up, th, cfg) - dynamics_unchecked(x, um, th, cfg)) / (2 * h);
    lin.d.col(j) = (evaluate_output(x, up, th) - evaluate_output(x, um, th)) / (2 * h);
  }
  return lin;
}

ContinuousLinearization linearize(const OperatingPoint& th_sharp, const PlantConfig& cfg) {
  const SteadyState ss = solve_steady_state(th_sharp, default_reference(th_sharp, cfg), cfg);
  return linearize_at(ss.x, ss.u, th_sharp, cfg);
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> discretize(const Eigen::MatrixXd& a_c,
                                                       const Eigen::MatrixXd& b_c, double ts) {
  if (!(ts > 0.0)) throw DomainError("sample time must be > 0");
  const Eigen::Index n = a_c.rows();
  const Eigen::Index m = b_c.cols();
  if (a_c.cols() != n || b_c.rows() != n) throw PreconditionError("discretize: dimension mismatch");

  Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + m, n + m);
  aug.topLeftCorner(n, n) = a_c * ts;
  aug.topRightCorner(n, m) = b_c * ts;

  Eigen::MatrixXd sum = Eigen::MatrixXd::Identity(n + m, n + m);
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(n + m, n + m);
  bool converged = false;
  for (int k = 1; k <= 100; ++k) {
    term = (term * aug) / static_cast<double>(k);
    sum += term;
    if (term.cwiseAbs().maxCoeff() < 1e-14) {
      converged = true;
      break;
    }
  }
  if (!converged) throw NumericError("matrix exponential series did not converge in 100 terms");
  return {sum.topLeftCorner(n, n), sum.topRightCorner(n, m)};
}

OutputVec default_reference(const OperatingPoint& th, const PlantConfig& cfg) {
  return evaluate_output(cfg.x_eq_at(th), cfg.u_eq_at(th), th);
}

SteadyState solve_steady_state(const OperatingPoint& th, const OutputVec& r,
                               const PlantConfig& cfg) {
  check_theta(th, cfg);
  const OutputVec y_lo(cfg.state_box.lo(kPin), cfg.state_box.lo(kFegr));
  const OutputVec y_hi(cfg.state_box.hi(kPin), cfg.state_box.hi(kFegr));
  if (!r.allFinite() || (r.array() < y_lo.array()).any() || (r.array() > y_hi.array()).any())
    throw DomainError("reference lies outside the output box");

  constexpr int kMaxIter = 200;
  constexpr double kTol = 1e-8;

  SsVec z;
  z << cfg.x_eq_at(th), cfg.u_eq_at(th);
  SsRes res = steady_residual(z, th, r, cfg);
  double norm = res.cwiseAbs().maxCoeff();
  int iter = 0;
  for (; iter < kMaxIter && norm > 1e-13; ++iter) {
    const ContinuousLinearization lin = linearize_at(z.head<kStateDim>(), z.tail<kInputDim>(), th, cfg);
    Eigen::Matrix<double, kStateDim + kOutputDim, kStateDim + kInputDim> jac;
    jac << lin.a, lin.b, lin.c, lin.d;
    const SsVec step = jac.completeOrthogonalDecomposition().solve(-res);

    double alpha = 1.0;
    bool improved = false;
    for (int k = 0; k < 40; ++k, alpha *= 0.5) {
      const SsVec trial = clamp_to_boxes(z + alpha * step, cfg);
      const SsRes trial_res = steady_residual(trial, th, r, cfg);
      const double trial_norm = trial_res.cwiseAbs().maxCoeff();
      if (trial_norm < norm) {
        z = trial;
        res = trial_res;
        norm = trial_norm;
        improved = true;
        break;
      }
    }
    if (!improved) break;
  }
  if (!(norm <= kTol)) {
    std::ostringstream os;
    os << "steady-state solve failed: residual " << norm << " after " << iter << " iterations";
    throw NoSolutionError(os.str(), norm);
  }
  return SteadyState{z.head<kStateDim>(), z.tail<kInputDim>(), norm, iter};
}

// --- grid -----------------------------------------------------------------------------

std::vector<OperatingPoint> grid_points(const PlantConfig& cfg) {
  std::vector<OperatingPoint> pts;
  const double ds = (cfg.theta_hi.speed - cfg.theta_lo.speed) / cfg.speed_points;
  const double df = (cfg.theta_hi.fuel - cfg.theta_lo.fuel) / cfg.fuel_points;
  for (int i = 0; i < cfg.speed_points; ++i)
    for (int j = 0; j < cfg.fuel_points; ++j)
      pts.push_back({cfg.theta_lo.speed + (i + 0.5) * ds, cfg.theta_lo.fuel + (j + 0.5) * df});
  return pts;
}

bool is_stabilizable(const MatA& a, const MatB& b) {
  Eigen::MatrixXd p;
  return linalg::solve_dare(a, b, Eigen::MatrixXd::Identity(kStateDim, kStateDim),
                            Eigen::MatrixXd::Identity(kInputDim, kInputDim), p);
}

RegionModel build_region(int index, const OperatingPoint& th, const PlantConfig& cfg) {
  RegionModel reg;
  reg.index = index;
  reg.theta = th;
  reg.sample_time = cfg.sample_time;
  reg.r_star = default_reference(th, cfg);
  const SteadyState ss = solve_steady_state(th, reg.r_star, cfg);
  reg.x_star = ss.x;
  reg.u_star = ss.u;
  const ContinuousLinearization lin = linearize_at(ss.x, ss.u, th, cfg);
  reg.a_cont = lin.a;
  reg.b_cont = lin.b;
  reg.c = lin.c;
  reg.d = lin.d;
  const auto [ad, bd] = discretize(lin.a, lin.b, cfg.sample_time);
  reg.a = ad;
  reg.b = bd;
  if (!is_stabilizable(reg.a, reg.b)) throw NumericError("region model is not stabilizable");
  return reg;
}

std::vector<RegionModel> build_region_grid(const PlantConfig& cfg) {
  cfg.validate();
  std::vector<RegionModel> grid;
  const auto pts = grid_points(cfg);
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const int index = static_cast<int>(k) + 1;
    try {
      grid.push_back(build_region(index, pts[k], cfg));
    } catch (const Error& e) {
      throw Error("region " + std::to_string(index) + ": " + e.what());
    }
  }
  return grid;
}

int select_region(const OperatingPoint& th, const std::vector<RegionModel>& grid,
                  const PlantConfig& cfg) {
  check_theta(th, cfg);
  if (grid.empty()) throw PreconditionError("select_region: empty grid");
  int best = grid.front().index;
  double best_d = std::numeric_limits<double>::infinity();
  for (const RegionModel& reg : grid) {
    const double d = scaled_distance_sq(th, reg.theta, cfg);
    if (d < best_d || (d == best_d && reg.index < best)) {
      best_d = d;
      best = reg.index;
    }
  }
  return best;
}

RegionSelector::RegionSelector(const std::vector<RegionModel>& grid, const PlantConfig& cfg)
    : grid_(&grid), cfg_(&cfg) {}

int RegionSelector::update(const OperatingPoint& th) {
  const int nearest = select_region(th, *grid_, *cfg_);
  if (current_ == 0 || cfg_->hysteresis <= 0.0) {
    current_ = nearest;
    return current_;
  }
  if (nearest != current_) {
    const auto& cur = (*grid_)[static_cast<std::size_t>(current_ - 1)];
    const auto& cand = (*grid_)[static_cast<std::size_t>(nearest - 1)];
    const double d_cur = std::sqrt(scaled_distance_sq(th, cur.theta, *cfg_));
    const double d_new = std::sqrt(scaled_distance_sq(th, cand.theta, *cfg_));
    if (d_new + cfg_->hysteresis < d_cur) current_ = nearest;
  }
  return current_;
}

}  // namespace mpctune::plant
