#include <cmath>
#include <random>

#include "mpctune/gain_tuner.hpp"
#include "mpctune/mpc_controller.hpp"

namespace mpctune::tuner {

int neighbour_region(int index, int region_count) {
  if (region_count < 2) throw PreconditionError("a step experiment needs at least two regions");
  if (index < 1 || index > region_count) throw PreconditionError("region index out of range");
  return index < region_count ? index + 1 : index - 1;
}

StepExperiment make_step_experiment(const std::vector<plant::RegionModel>& grid, int region_index,
                                    const plant::PlantConfig& plant, const StepExperimentConfig& cfg) {
  const int n = static_cast<int>(grid.size());
  if (region_index < 1 || region_index > n) throw PreconditionError("region index out of range");
  if (!(cfg.window > 0.0)) throw PreconditionError("step window must be > 0");

  StepExperiment exp;
  exp.plant = plant;
  exp.region = grid[static_cast<std::size_t>(region_index - 1)];
  exp.r_start = exp.region.r_star;
  exp.r_final = cfg.reference ? *cfg.reference : grid[static_cast<std::size_t>(neighbour_region(region_index, n) - 1)].r_star;
  const plant::SteadyState ss = plant::solve_steady_state(exp.region.theta, exp.r_final, plant);
  exp.x_target = ss.x;
  exp.u_target = ss.u;
  exp.samples = static_cast<int>(std::lround(cfg.window / plant.sample_time));
  exp.window = exp.samples * plant.sample_time;
  exp.tolerance = cfg.tolerance;
  if (std::abs(exp.window - cfg.window) > 1e-9 * cfg.window)
    throw PreconditionError("step window must be a multiple of the sample time");
  return exp;
}

features::StepResponse simulate_step(const mpc::GainSet& gains, const StepExperiment& exp) {
  const plant::PlantConfig& pc = exp.plant;
  const plant::OperatingPoint th = exp.region.theta;
  mpc::MpcController ctrl(exp.region, gains, pc);
  ctrl.set_target(exp.x_target, exp.u_target);

  features::StepResponse resp;
  resp.id = "region-" + std::to_string(exp.region.index);
  resp.window = exp.window;
  for (int o = 0; o < features::kNumOutputs; ++o) resp.ref[o] = {exp.r_start(o), exp.r_final(o)};

  std::mt19937_64 noise_rng(pc.noise_seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double dt = pc.sample_time / pc.rk4_substeps;
  plant::StateVec x = exp.region.x_star;
  // Noise is indexed by sample instant from t = 0; the t = 0 sample is not part
  // of the response but keeps the stream aligned with the drive-cycle logger.
  if (pc.output_noise_std > 0.0)
    for (int o = 0; o < features::kNumOutputs; ++o) noise(noise_rng);
  for (int k = 0; k < exp.samples; ++k) {
    const plant::InputVec u = ctrl.step(x);
    for (int s = 0; s < pc.rk4_substeps; ++s) x = plant::integrate_step(x, u, th, dt, pc);
    const plant::OutputVec y = plant::evaluate_output(x, u, th);
    resp.time.push_back((k + 1) * pc.sample_time);
    for (int o = 0; o < features::kNumOutputs; ++o) {
      double v = y(o);
      if (pc.output_noise_std > 0.0) v += pc.output_noise_std * noise(noise_rng);
      resp.y[o].push_back(v);
    }
  }
  return resp;
}

Evaluation evaluate_candidate(const mpc::GainSet& gains, const surrogate::Surrogate& sur,
                              const StepExperiment& exp) {
  features::StepResponse resp;
  try {
    resp = simulate_step(gains, exp);
  } catch (const ControllerFault& e) {
    return {kFaultCost, true, e.what()};
  } catch (const DomainError& e) {
    return {kFaultCost, true, e.what()};
  } catch (const NumericError& e) {
    return {kFaultCost, true, e.what()};
  } catch (const PreconditionError& e) {
    // Gains outside the cones (e.g. an oracle perturbation across the boundary).
    return {kFaultCost, true, e.what()};
  }
  for (const auto& y : resp.y)
    for (double v : y)
      if (!std::isfinite(v)) return {kFaultCost, true, "non-finite output"};
  const double c = sur.cost(features::extract_features(resp, exp.tolerance));
  if (!std::isfinite(c)) return {kFaultCost, true, "non-finite surrogate cost"};
  return {c, false, {}};
}

TuneResult tune_region(const StepExperiment& exp, const surrogate::Surrogate& sur, const TunerConfig& cfg) {
  const CostFunction eval = [&](const mpc::GainSet& g) { return evaluate_candidate(g, sur, exp); };
  return tune(plant::kStateDim, plant::kInputDim, eval, cfg);
}

}  // namespace mpctune::tuner
