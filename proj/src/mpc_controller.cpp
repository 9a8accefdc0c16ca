#include "mpctune/mpc_controller.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

#include "mpctune/errors.hpp"

namespace mpctune::mpc {

MpcController::MpcController(const plant::RegionModel& region, const GainSet& gains,
                             const plant::PlantConfig& cfg)
    : region_index_(region.index),
      cfg_(&cfg),
      x_star_(region.x_star),
      u_star_(region.u_star),
      mpc_(LinearModel{region.a, region.b}, gains, PerturbationBoxes::shifted(cfg, region.x_star, region.u_star)) {}

void MpcController::set_target(const plant::StateVec& x_star, const plant::InputVec& u_star) {
  if (x_star == x_star_ && u_star == u_star_) return;
  x_star_ = x_star;
  u_star_ = u_star;
  mpc_.set_boxes(PerturbationBoxes::shifted(*cfg_, x_star, u_star));
}

plant::InputVec MpcController::step(const plant::StateVec& x_sample) {
  const Eigen::VectorXd x0 = x_sample - x_star_;
  try {
    last_ = mpc_.solve(x0);
  } catch (const InfeasibleError& e) {
    throw ControllerFault(std::string("region ") + std::to_string(region_index_) + ": " + e.what(),
                          region_index_, std::numeric_limits<double>::infinity());
  } catch (const NumericError& e) {
    throw ControllerFault(std::string("region ") + std::to_string(region_index_) + ": " + e.what(),
                          region_index_, std::numeric_limits<double>::infinity());
  }
  const double kkt = last_.kkt.max();
  const double scale = std::max(1.0, mpc_.problem_scale());
  if (!(kkt <= 1e-8 * scale)) {
    std::ostringstream os;
    os << "region " << region_index_ << ": KKT residual " << kkt << " above tolerance";
    throw ControllerFault(os.str(), region_index_, kkt);
  }
  const plant::InputVec du = last_.u.head(plant::kInputDim);
  return (u_star_ + du).cwiseMax(cfg_->input_box.lo).cwiseMin(cfg_->input_box.hi);
}

plant::InputVec mpc_step(const plant::StateVec& x_sample, const plant::RegionModel& region,
                         const GainSet& gains, const plant::PlantConfig& cfg) {
  MpcController ctrl(region, gains, cfg);
  return ctrl.step(x_sample);
}

}  // namespace mpctune::mpc
