#pragma once

// Projected derivative-free random search over the MPC weights (P, Q, R) of
// one region, driven by the learned grader cost of a closed-loop step test.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "mpctune/errors.hpp"
#include "mpctune/gain_set.hpp"
#include "mpctune/plant_model.hpp"
#include "mpctune/surrogate_cost.hpp"
#include "mpctune/trajectory_features.hpp"

namespace mpctune::tuner {

// --- cones and directions --------------------------------------------------------

/// Haar-distributed orthogonal matrix: QR of a standard Gaussian matrix with
/// the signs of diag(R) folded into Q.
Eigen::MatrixXd random_orthogonal(int n, std::mt19937_64& rng);

/// Q^T diag(lambda) Q with Q Haar-orthogonal and lambda i.i.d. N(0, 1).
/// Exactly symmetric.
Eigen::MatrixXd random_symmetric_direction(int n, std::mt19937_64& rng);

/// Frobenius-nearest PSD matrix V max(L, 0) V^T. The result is symmetrised and,
/// if rounding leaves sym_eigmin below zero, shifted by the smallest multiple of
/// the identity that restores it.
Eigen::MatrixXd project_psd(const Eigen::MatrixXd& s);

/// V max(L, d) V^T, certified to sym_eigmin >= d in the same way.
Eigen::MatrixXd project_pd(const Eigen::MatrixXd& s, double d);

struct DirectionTriple {
  Eigen::MatrixXd p, q, r;

  static DirectionTriple random(int nx, int nu, std::mt19937_64& rng);
  static DirectionTriple zeros(int nx, int nu);
  double frobenius_norm() const;
};

// --- oracle ----------------------------------------------------------------------

/// Result of one cost evaluation. A faulted evaluation carries kFaultCost.
struct Evaluation {
  double cost = 0.0;
  bool fault = false;
  std::string message;
};

inline constexpr double kFaultCost = 1.0;

using CostFunction = std::function<Evaluation(const mpc::GainSet&)>;

/// Raised when the perturbed point of the oracle cannot be evaluated.
class OracleError : public TuningError {
 public:
  using TuningError::TuningError;
};

struct OracleResult {
  DirectionTriple g;
  double delta = 0.0;  // (f(K + mu M) - f(K)) / mu
  double perturbed_cost = 0.0;
};

/// Gradient-free oracle: one shared difference quotient along the joint
/// perturbation (P + mu M_P, Q + mu M_Q, R + mu M_R), times each direction.
/// `base_cost` is f(candidate) when the caller already knows it.
OracleResult random_oracle(const mpc::GainSet& candidate, const DirectionTriple& dirs, double mu,
                           const CostFunction& eval, std::optional<double> base_cost = std::nullopt);

// --- search ----------------------------------------------------------------------

struct TunerConfig {
  double mu = 1e-9;
  double step0 = 1e-6;        // h_j = step0 / sqrt(j + 1)
  int iterations = 50;
  double pd_floor = 1e-15;    // eigenvalue floor of R
  int batch_size = 8;
  double init_shift = 2.5;    // initial points: project(init_scale (init_shift I + M))
  double init_scale = 1.0;
  int max_redraws = 8;        // oracle direction redraws before an iteration is skipped
  Eigen::MatrixXd metric;     // B over the packed gain vector; empty means identity
  int horizon = 10;
  std::uint64_t seed = 0;

  double step(int j) const;
  void validate(int parameter_count) const;
};

struct TraceEntry {
  int iteration = 0;          // 0 is the promising candidate
  double candidate_cost = 0.0;
  double best_cost = 0.0;
  bool fault = false;
  double oracle_norm = 0.0;   // Frobenius norm of (G_P, G_Q, G_R)
  int redraws = 0;
  mpc::GainSet gains;         // iterate after this iteration's update
};

struct TuneTrace {
  std::vector<double> batch_costs;
  std::vector<bool> batch_faults;
  int promising_index = 0;
  std::vector<TraceEntry> entries;

  double initial_cost() const { return entries.front().candidate_cost; }
  double final_best_cost() const { return entries.back().best_cost; }
  bool best_monotone() const;
};

struct TuneResult {
  mpc::GainSet best;
  double best_cost = 0.0;
  TuneTrace trace;
};

/// Draws the initial batch (cone projections of shifted random directions).
std::vector<mpc::GainSet> initial_batch(int nx, int nu, const TunerConfig& cfg, std::mt19937_64& rng);

/// Batch initialisation, promising-candidate selection, then cfg.iterations of
///   K <- pi(K - h_j B^{-1} g_mu(K))
/// with PSD projections for P, Q and the PD projection for R. Throws
/// TuningError when every batch member faults.
TuneResult tune(int nx, int nu, const CostFunction& eval, const TunerConfig& cfg);

std::string trace_to_csv(const TuneTrace& trace);
nlohmann::json trace_to_json(const TuneTrace& trace);
void save_trace_csv(const TuneTrace& trace, const std::string& path);

// --- closed-loop step test -------------------------------------------------------

struct StepExperimentConfig {
  double window = 8.0;                       // T-bar [s]
  std::optional<plant::OutputVec> reference;  // default: the neighbouring region's reference
  features::ToleranceConfig tolerance;
};

/// Fully resolved step test of one region: start at the region's equilibrium,
/// regulate to the steady state of the new reference at the same operating point.
struct StepExperiment {
  plant::PlantConfig plant;
  plant::RegionModel region;
  plant::OutputVec r_start, r_final;
  plant::StateVec x_target;
  plant::InputVec u_target;
  int samples = 0;
  double window = 0.0;
  features::ToleranceConfig tolerance;
};

/// Index (1-based) of the region whose reference is the default step target:
/// the next region, or the previous one for the last.
int neighbour_region(int index, int region_count);

StepExperiment make_step_experiment(const std::vector<plant::RegionModel>& grid, int region_index,
                                    const plant::PlantConfig& plant, const StepExperimentConfig& cfg = {});

/// Closed loop of the twin and the region's MPC over the window. Samples at
/// k Ts, k = 1..samples. Throws ControllerFault, DomainError or IntegrationError.
features::StepResponse simulate_step(const mpc::GainSet& gains, const StepExperiment& exp);

/// Surrogate cost of the step test's features; kFaultCost if the loop faults.
Evaluation evaluate_candidate(const mpc::GainSet& gains, const surrogate::Surrogate& sur,
                              const StepExperiment& exp);

TuneResult tune_region(const StepExperiment& exp, const surrogate::Surrogate& sur, const TunerConfig& cfg);

}  // namespace mpctune::tuner
