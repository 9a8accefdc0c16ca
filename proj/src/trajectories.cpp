#include <cstdio>
#include <filesystem>
#include <random>

#include "mpctune/errors.hpp"
#include "mpctune/tuning_harness.hpp"

namespace mpctune::harness {

namespace {

std::string make_id(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%06d", prefix, i);
  return buf;
}

}  // namespace

SamplerMode sampler_mode_from_string(const std::string& s) {
  if (s == "synthetic") return SamplerMode::kSynthetic;
  if (s == "closed_loop" || s == "closed-loop") return SamplerMode::kClosedLoop;
  throw PreconditionError("unknown sampler mode '" + s + "' (expected synthetic or closed_loop)");
}

CandidateSet generate_candidate_trajectories(const std::vector<plant::RegionModel>& grid,
                                             const plant::PlantConfig& plant, const SamplerConfig& cfg) {
  if (cfg.count < 0) throw PreconditionError("candidate count must be >= 0");
  CandidateSet out;
  std::mt19937_64 rng(cfg.seed);

  if (cfg.mode == SamplerMode::kSynthetic) {
    std::uniform_real_distribution<double> level(0.2, 0.8), step(0.05, 0.3);
    std::bernoulli_distribution down(0.5);
    for (int i = 0; i < cfg.count; ++i) {
      std::array<features::TemplateParams, features::kNumOutputs> params;
      std::array<features::StepReference, features::kNumOutputs> ref;
      for (int o = 0; o < features::kNumOutputs; ++o) {
        params[o] = features::sample_template(rng);
        const double a = level(rng), d = step(rng);
        ref[o] = {a, down(rng) ? a - d : a + d};
      }
      features::StepResponse r = features::template_response(params, ref, cfg.window, cfg.samples, rng());
      r.id = make_id("syn", i);
      out.features.push_back(features::extract_features(r));
      out.responses.push_back(std::move(r));
      out.gains.emplace_back();
    }
    return out;
  }

  std::vector<int> regions = cfg.regions;
  if (regions.empty())
    for (const auto& g : grid) regions.push_back(g.index);
  std::map<int, tuner::StepExperiment> experiments;
  tuner::StepExperimentConfig ecfg;
  ecfg.window = cfg.window;
  for (int r : regions) experiments.emplace(r, tuner::make_step_experiment(grid, r, plant, ecfg));

  tuner::TunerConfig dist = cfg.gain_distribution;
  dist.batch_size = 1;
  std::uniform_int_distribution<std::size_t> pick(0, regions.size() - 1);
  for (int i = 0; i < cfg.count; ++i) {
    const int region = regions[pick(rng)];
    const mpc::GainSet g = tuner::initial_batch(plant::kStateDim, plant::kInputDim, dist, rng).front();
    try {
      features::StepResponse r = tuner::simulate_step(g, experiments.at(region));
      r.id = make_id("cl", i);
      out.features.push_back(features::extract_features(r));
      out.responses.push_back(std::move(r));
      out.gains.emplace_back(g);
    } catch (const Error& e) {
      ++out.skipped;
      out.skip_reasons.push_back(make_id("cl", i) + ": " + e.what());
    }
  }
  return out;
}

void write_candidates(const CandidateSet& set, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<surrogate::LabeledSample> rows;
  for (std::size_t i = 0; i < set.responses.size(); ++i) {
    const auto& r = set.responses[i];
    features::save_step_response(r, (fs::path(dir) / (r.id + ".csv")).string(),
                                 (fs::path(dir) / (r.id + ".json")).string());
    if (set.gains[i]) mpc::save_gains(*set.gains[i], (fs::path(dir) / (r.id + ".gains.json")).string());
    surrogate::LabeledSample s;
    s.trajectory_id = r.id;
    s.features = set.features[i];
    s.grade = surrogate::synth_label(s.features);
    s.source = surrogate::Source::kSynthetic;
    rows.push_back(std::move(s));
  }
  surrogate::save_dataset(rows, (fs::path(dir) / "features.jsonl").string());
}

}  // namespace mpctune::harness
