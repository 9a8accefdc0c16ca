#pragma once

// Orchestration: drive schedules and the switched closed loop, candidate
// trajectory generation for labelling, and the multi-region tuning campaign.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpctune/gain_set.hpp"
#include "mpctune/gain_tuner.hpp"
#include "mpctune/plant_model.hpp"
#include "mpctune/surrogate_cost.hpp"
#include "mpctune/trajectory_features.hpp"

namespace mpctune::harness {

// --- drive schedule ----------------------------------------------------------------

struct SchedulePoint {
  double t = 0.0;
  plant::OperatingPoint theta;
  plant::OutputVec reference = plant::OutputVec::Zero();
};

/// Piecewise-linear in time between points; the value of the last point is held.
/// Duration is the time of the last point.
struct DriveSchedule {
  std::vector<SchedulePoint> points;

  double duration() const { return points.empty() ? 0.0 : points.back().t; }
  /// Throws DomainError unless times start at 0, strictly increase and every
  /// operating point lies in the theta rectangle.
  void validate(const plant::PlantConfig& cfg) const;
  SchedulePoint at(double t) const;
};

/// CSV with header t,speed,fuel,r1,r2.
DriveSchedule parse_schedule_csv(const std::string& text);
DriveSchedule load_schedule_csv(const std::string& path);
std::string schedule_to_csv(const DriveSchedule& s);

struct BundledScheduleConfig {
  double hold = 12.0;  // [s] at each region's centre
  double ramp = 3.0;   // [s] transition to the next region
};

/// Visits every region centre in index order at its default reference.
DriveSchedule bundled_schedule(const std::vector<plant::RegionModel>& grid, const BundledScheduleConfig& cfg = {});

/// Hold intervals [start, end) of the bundled schedule, one per region.
std::vector<std::pair<double, double>> bundled_hold_intervals(const std::vector<plant::RegionModel>& grid,
                                                              const BundledScheduleConfig& cfg = {});

// --- switched closed loop ----------------------------------------------------------

struct LogRow {
  double t = 0.0;
  plant::OperatingPoint theta;
  int region = 0;
  plant::StateVec x;
  plant::InputVec u;
  plant::OutputVec y;  // measured (with output noise when configured)
  plant::OutputVec r;
  bool fault = false;
};

struct ClosedLoopLog {
  std::vector<LogRow> rows;
  int fault_count = 0;
  std::vector<std::string> fault_messages;
};

struct ClosedLoopOptions {
  /// Defaults to the steady state of the schedule's first point.
  std::optional<plant::StateVec> initial_state;
};

/// Samples at k Ts for k*Ts < duration. At each sample: select the region
/// (with hysteresis), regulate to the steady state of the scheduled reference
/// at the scheduled operating point, log, then integrate to the next sample.
/// A controller fault is logged and the previous input held.
ClosedLoopLog run_closed_loop(const DriveSchedule& schedule, const std::map<int, mpc::GainSet>& gains_by_region,
                              const std::vector<plant::RegionModel>& grid, const plant::PlantConfig& cfg,
                              const ClosedLoopOptions& opt = {});

std::string log_to_csv(const ClosedLoopLog& log);
void save_log_csv(const ClosedLoopLog& log, const std::string& path);

/// Largest |y - r| over the given time intervals, per output, divided by the
/// width of that output's box.
double normalized_tracking_error(const ClosedLoopLog& log, const std::vector<std::pair<double, double>>& intervals,
                                 const plant::PlantConfig& cfg);

// --- candidate trajectories --------------------------------------------------------

enum class SamplerMode { kSynthetic, kClosedLoop };
SamplerMode sampler_mode_from_string(const std::string& s);

struct SamplerConfig {
  SamplerMode mode = SamplerMode::kSynthetic;
  int count = 100;
  std::uint64_t seed = 0;
  double window = 8.0;
  int samples = 80;        // synthetic mode; closed loop uses window / Ts
  std::vector<int> regions;  // closed-loop mode; empty means all
  tuner::TunerConfig gain_distribution;  // init_shift, init_scale, pd_floor, horizon
};

struct CandidateSet {
  std::vector<features::StepResponse> responses;
  std::vector<features::FeatureVector> features;
  std::vector<std::optional<mpc::GainSet>> gains;  // closed-loop mode only
  int skipped = 0;
  std::vector<std::string> skip_reasons;
};

CandidateSet generate_candidate_trajectories(const std::vector<plant::RegionModel>& grid,
                                             const plant::PlantConfig& plant, const SamplerConfig& cfg);

/// <dir>/<id>.csv and <id>.json per response, plus features.jsonl with the
/// synthetic label of every row.
void write_candidates(const CandidateSet& set, const std::string& dir);

// --- campaign --------------------------------------------------------------------

struct CampaignConfig {
  std::string plant_config_path;  // empty: built-in twin
  int speed_points = 3;
  int fuel_points = 4;
  int synthetic_samples = 4330;
  std::uint64_t data_seed = 1;
  surrogate::TrainConfig training;
  std::string surrogate_path;  // load instead of training when set
  tuner::TunerConfig tuner;
  tuner::StepExperimentConfig experiment;
  std::vector<int> regions;  // empty means all
  bool shared_surrogate = true;
  int parallel = 1;
  std::uint64_t seed = 0;

  static CampaignConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

CampaignConfig load_campaign_config(const std::string& path);

/// Plant configuration with the campaign's grid sizes applied.
plant::PlantConfig campaign_plant(const CampaignConfig& cfg);

/// Trains on the synthetic labeller (or loads cfg.surrogate_path).
surrogate::Surrogate campaign_surrogate(const CampaignConfig& cfg, surrogate::TrainResult* report = nullptr);

/// Per-region tuner seed derived from the campaign seed.
std::uint64_t region_seed(std::uint64_t campaign_seed, int region);

struct RegionOutcome {
  int region = 0;
  bool ok = false;
  std::string error;
  std::uint64_t seed = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  mpc::GainSet gains;
  tuner::TuneTrace trace;
};

struct CampaignReport {
  std::vector<RegionOutcome> regions;
  int failed() const;
  nlohmann::json to_json() const;
};

/// Tunes every listed region on a pool of cfg.parallel workers. `surrogates`
/// holds one shared network, or one per grid region when
/// cfg.shared_surrogate is false. Per-region failures are collected; throws
/// TuningError only if every region fails. When out_dir is set, writes
/// gains_region_XX.json, trace_region_XX.csv and report.json there.
CampaignReport run_tuning_campaign(const CampaignConfig& cfg, const std::vector<plant::RegionModel>& grid,
                                   const plant::PlantConfig& plant, const std::vector<surrogate::Surrogate>& surrogates,
                                   const std::string& out_dir = {});

std::string gains_file_name(int region);
std::string trace_file_name(int region);

}  // namespace mpctune::harness
