#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <random>
#include <sstream>

#include "mpctune/errors.hpp"
#include "mpctune/mpc_controller.hpp"
#include "mpctune/tuning_harness.hpp"

namespace mpctune::harness {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

}  // namespace

void DriveSchedule::validate(const plant::PlantConfig& cfg) const {
  if (points.size() < 2) throw DomainError("drive schedule needs at least two points");
  if (points.front().t != 0.0) throw DomainError("drive schedule must start at t = 0");
  for (std::size_t i = 0; i < points.size(); ++i) {
    const SchedulePoint& p = points[i];
    if (!std::isfinite(p.t) || !p.reference.allFinite()) throw DomainError("non-finite schedule entry");
    if (i > 0 && !(p.t > points[i - 1].t))
      throw DomainError("schedule times must strictly increase (row " + std::to_string(i + 1) + ")");
    if (p.theta.speed < cfg.theta_lo.speed || p.theta.speed > cfg.theta_hi.speed ||
        p.theta.fuel < cfg.theta_lo.fuel || p.theta.fuel > cfg.theta_hi.fuel)
      throw DomainError("schedule operating point outside the theta rectangle (row " + std::to_string(i + 1) + ")");
  }
}

SchedulePoint DriveSchedule::at(double t) const {
  if (points.empty()) throw PreconditionError("empty drive schedule");
  if (t <= points.front().t) return points.front();
  if (t >= points.back().t) return points.back();
  std::size_t i = 1;
  while (points[i].t <= t) ++i;
  const SchedulePoint& a = points[i - 1];
  const SchedulePoint& b = points[i];
  const double w = (t - a.t) / (b.t - a.t);
  SchedulePoint p;
  p.t = t;
  p.theta = {a.theta.speed + w * (b.theta.speed - a.theta.speed), a.theta.fuel + w * (b.theta.fuel - a.theta.fuel)};
  p.reference = a.reference + w * (b.reference - a.reference);
  return p;
}

DriveSchedule parse_schedule_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw DomainError("empty schedule file");
  const auto head = split_csv(line);
  const std::vector<std::string> expect{"t", "speed", "fuel", "r1", "r2"};
  if (head.size() != expect.size()) throw DomainError("schedule header must be t,speed,fuel,r1,r2");
  for (std::size_t i = 0; i < head.size(); ++i)
    if (trim(head[i]) != expect[i]) throw DomainError("schedule header must be t,speed,fuel,r1,r2");
  DriveSchedule s;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 5) throw DomainError("schedule line " + std::to_string(lineno) + ": expected 5 columns");
    double v[5];
    for (int c = 0; c < 5; ++c) {
      try {
        std::size_t used = 0;
        const std::string cell = trim(cells[static_cast<std::size_t>(c)]);
        v[c] = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw DomainError("schedule line " + std::to_string(lineno) + ": bad number");
      }
    }
    s.points.push_back({v[0], {v[1], v[2]}, plant::OutputVec(v[3], v[4])});
  }
  return s;
}

DriveSchedule load_schedule_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_schedule_csv(ss.str());
}

std::string schedule_to_csv(const DriveSchedule& s) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  os << "t,speed,fuel,r1,r2\n";
  for (const SchedulePoint& p : s.points)
    os << p.t << ',' << p.theta.speed << ',' << p.theta.fuel << ',' << p.reference(0) << ',' << p.reference(1) << '\n';
  return os.str();
}

DriveSchedule bundled_schedule(const std::vector<plant::RegionModel>& grid, const BundledScheduleConfig& cfg) {
  if (grid.empty()) throw PreconditionError("bundled schedule needs a grid");
  if (!(cfg.hold > 0.0) || !(cfg.ramp > 0.0)) throw PreconditionError("hold and ramp must be > 0");
  DriveSchedule s;
  double t = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (i > 0) t += cfg.ramp;
    s.points.push_back({t, grid[i].theta, grid[i].r_star});
    t += cfg.hold;
    s.points.push_back({t, grid[i].theta, grid[i].r_star});
  }
  return s;
}

std::vector<std::pair<double, double>> bundled_hold_intervals(const std::vector<plant::RegionModel>& grid,
                                                              const BundledScheduleConfig& cfg) {
  std::vector<std::pair<double, double>> out;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double start = static_cast<double>(i) * (cfg.hold + cfg.ramp);
    out.emplace_back(start, start + cfg.hold);
  }
  return out;
}

ClosedLoopLog run_closed_loop(const DriveSchedule& schedule, const std::map<int, mpc::GainSet>& gains_by_region,
                              const std::vector<plant::RegionModel>& grid, const plant::PlantConfig& cfg,
                              const ClosedLoopOptions& opt) {
  schedule.validate(cfg);
  const double ts = cfg.sample_time;
  const double dt = ts / cfg.rk4_substeps;
  const int n = static_cast<int>(std::ceil(schedule.duration() / ts - 1e-9));

  const SchedulePoint p0 = schedule.at(0.0);
  const plant::SteadyState ss0 = plant::solve_steady_state(p0.theta, p0.reference, cfg);
  plant::StateVec x = opt.initial_state ? *opt.initial_state : ss0.x;
  plant::InputVec u_prev = ss0.u;

  plant::RegionSelector selector(grid, cfg);
  std::map<int, std::unique_ptr<mpc::MpcController>> controllers;
  auto controller = [&](int region) -> mpc::MpcController& {
    auto it = controllers.find(region);
    if (it != controllers.end()) return *it->second;
    const auto g = gains_by_region.find(region);
    if (g == gains_by_region.end())
      throw PreconditionError("no gains for region " + std::to_string(region) + " touched by the schedule");
    auto ctrl = std::make_unique<mpc::MpcController>(grid[static_cast<std::size_t>(region - 1)], g->second, cfg);
    return *controllers.emplace(region, std::move(ctrl)).first->second;
  };

  // Steady-state target cache: the schedule is mostly piecewise constant.
  bool have_target = false;
  plant::OperatingPoint target_theta;
  plant::OutputVec target_r;
  plant::SteadyState target;

  std::mt19937_64 noise_rng(cfg.noise_seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  ClosedLoopLog log;
  log.rows.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const double t = k * ts;
    const SchedulePoint p = schedule.at(t);
    LogRow row;
    row.t = t;
    row.theta = p.theta;
    row.region = selector.update(p.theta);
    row.x = x;
    row.r = p.reference;
    mpc::MpcController& ctrl = controller(row.region);
    try {
      if (!have_target || !(target_theta == p.theta) || target_r != p.reference) {
        have_target = false;
        target = plant::solve_steady_state(p.theta, p.reference, cfg);
        target_theta = p.theta;
        target_r = p.reference;
        have_target = true;
      }
      ctrl.set_target(target.x, target.u);
      row.u = ctrl.step(x);
    } catch (const ControllerFault& e) {
      row.fault = true;
      log.fault_messages.push_back(e.what());
    } catch (const NoSolutionError& e) {
      row.fault = true;
      log.fault_messages.push_back(e.what());
    }
    if (row.fault) {
      row.u = u_prev;
      ++log.fault_count;
    }
    row.y = plant::evaluate_output(x, row.u, p.theta);
    if (cfg.output_noise_std > 0.0)
      for (int o = 0; o < plant::kOutputDim; ++o) row.y(o) += cfg.output_noise_std * noise(noise_rng);
    for (int s = 0; s < cfg.rk4_substeps; ++s) x = plant::integrate_step(x, row.u, p.theta, dt, cfg);
    u_prev = row.u;
    log.rows.push_back(row);
  }
  return log;
}

std::string log_to_csv(const ClosedLoopLog& log) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  os << "t,speed,fuel,region,x1,x2,x3,x4,u1,u2,u3,y1,y2,r1,r2,fault\n";
  for (const LogRow& r : log.rows) {
    os << r.t << ',' << r.theta.speed << ',' << r.theta.fuel << ',' << r.region;
    for (int i = 0; i < plant::kStateDim; ++i) os << ',' << r.x(i);
    for (int i = 0; i < plant::kInputDim; ++i) os << ',' << r.u(i);
    for (int i = 0; i < plant::kOutputDim; ++i) os << ',' << r.y(i);
    for (int i = 0; i < plant::kOutputDim; ++i) os << ',' << r.r(i);
    os << ',' << (r.fault ? 1 : 0) << '\n';
  }
  return os.str();
}

void save_log_csv(const ClosedLoopLog& log, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path);
  os << log_to_csv(log);
  if (!os) throw Error("write failed: " + path);
}

double normalized_tracking_error(const ClosedLoopLog& log, const std::vector<std::pair<double, double>>& intervals,
                                 const plant::PlantConfig& cfg) {
  const double span[2] = {cfg.state_box.hi(plant::kPin) - cfg.state_box.lo(plant::kPin),
                          cfg.state_box.hi(plant::kFegr) - cfg.state_box.lo(plant::kFegr)};
  double worst = 0.0;
  for (const LogRow& r : log.rows)
    for (const auto& [a, b] : intervals)
      if (r.t >= a && r.t < b)
        for (int o = 0; o < plant::kOutputDim; ++o) worst = std::max(worst, std::abs(r.y(o) - r.r(o)) / span[o]);
  return worst;
}

}  // namespace mpctune::harness
