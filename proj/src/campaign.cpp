#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

#include "mpctune/errors.hpp"
#include "mpctune/json_eigen.hpp"
#include "mpctune/tuning_harness.hpp"

namespace mpctune::harness {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw DomainError(where + ": expected an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw DomainError(where + ": unknown key '" + k + "'");
}

template <class T>
void get_opt(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw DomainError(std::string("config key '") + key + "': " + e.what());
  }
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

CampaignConfig CampaignConfig::from_json(const json& j) {
  check_keys(j, {"plant_config", "grid", "surrogate", "tuner", "experiment", "regions", "parallel", "seed"}, "campaign");
  CampaignConfig c;
  get_opt(j, "plant_config", c.plant_config_path);
  get_opt(j, "regions", c.regions);
  get_opt(j, "parallel", c.parallel);
  get_opt(j, "seed", c.seed);
  if (j.contains("grid")) {
    const json& g = j["grid"];
    check_keys(g, {"speed_points", "fuel_points"}, "grid");
    get_opt(g, "speed_points", c.speed_points);
    get_opt(g, "fuel_points", c.fuel_points);
  }
  if (j.contains("surrogate")) {
    const json& s = j["surrogate"];
    check_keys(s, {"synthetic_samples", "data_seed", "path", "shared", "training"}, "surrogate");
    get_opt(s, "synthetic_samples", c.synthetic_samples);
    get_opt(s, "data_seed", c.data_seed);
    get_opt(s, "path", c.surrogate_path);
    get_opt(s, "shared", c.shared_surrogate);
    if (s.contains("training")) {
      const json& t = s["training"];
      check_keys(t, {"learning_rate", "momentum", "batch_size", "epochs", "patience", "seed"}, "training");
      get_opt(t, "learning_rate", c.training.learning_rate);
      get_opt(t, "momentum", c.training.momentum);
      get_opt(t, "batch_size", c.training.batch_size);
      get_opt(t, "epochs", c.training.epochs);
      get_opt(t, "patience", c.training.patience);
      get_opt(t, "seed", c.training.seed);
    }
  }
  if (j.contains("tuner")) {
    const json& t = j["tuner"];
    check_keys(t, {"mu", "step0", "iterations", "pd_floor", "batch_size", "init_shift", "init_scale", "max_redraws",
                   "horizon", "metric"},
               "tuner");
    get_opt(t, "mu", c.tuner.mu);
    get_opt(t, "step0", c.tuner.step0);
    get_opt(t, "iterations", c.tuner.iterations);
    get_opt(t, "pd_floor", c.tuner.pd_floor);
    get_opt(t, "batch_size", c.tuner.batch_size);
    get_opt(t, "init_shift", c.tuner.init_shift);
    get_opt(t, "init_scale", c.tuner.init_scale);
    get_opt(t, "max_redraws", c.tuner.max_redraws);
    get_opt(t, "horizon", c.tuner.horizon);
    if (t.contains("metric")) c.tuner.metric = jsonio::matrix_from_json(t["metric"], "tuner.metric");
  }
  if (j.contains("experiment")) {
    const json& e = j["experiment"];
    check_keys(e, {"window", "reference"}, "experiment");
    get_opt(e, "window", c.experiment.window);
    if (e.contains("reference")) {
      const Eigen::VectorXd r = jsonio::vector_from_json(e["reference"], "experiment.reference");
      if (r.size() != plant::kOutputDim) throw DomainError("experiment.reference must have two entries");
      c.experiment.reference = plant::OutputVec(r);
    }
  }
  if (c.parallel < 1) throw DomainError("parallel must be >= 1");
  if (c.synthetic_samples < 1) throw DomainError("synthetic_samples must be >= 1");
  c.training.validate();
  c.tuner.validate(plant::kStateDim * (plant::kStateDim + 1) + plant::kInputDim * (plant::kInputDim + 1) / 2);
  return c;
}

json CampaignConfig::to_json() const {
  json tuner_j{{"mu", tuner.mu},
               {"step0", tuner.step0},
               {"iterations", tuner.iterations},
               {"pd_floor", tuner.pd_floor},
               {"batch_size", tuner.batch_size},
               {"init_shift", tuner.init_shift},
               {"init_scale", tuner.init_scale},
               {"max_redraws", tuner.max_redraws},
               {"horizon", tuner.horizon}};
  if (tuner.metric.size() != 0) tuner_j["metric"] = jsonio::matrix_to_json(tuner.metric);
  json exp_j{{"window", experiment.window}};
  if (experiment.reference) exp_j["reference"] = jsonio::vector_to_json(*experiment.reference);
  return json{{"plant_config", plant_config_path},
              {"grid", {{"speed_points", speed_points}, {"fuel_points", fuel_points}}},
              {"surrogate",
               {{"synthetic_samples", synthetic_samples},
                {"data_seed", data_seed},
                {"path", surrogate_path},
                {"shared", shared_surrogate},
                {"training",
                 {{"learning_rate", training.learning_rate},
                  {"momentum", training.momentum},
                  {"batch_size", training.batch_size},
                  {"epochs", training.epochs},
                  {"patience", training.patience},
                  {"seed", training.seed}}}}},
              {"tuner", tuner_j},
              {"experiment", exp_j},
              {"regions", regions},
              {"parallel", parallel},
              {"seed", seed}};
}

CampaignConfig load_campaign_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw DomainError(path + ": " + e.what());
  }
  return CampaignConfig::from_json(j);
}

plant::PlantConfig campaign_plant(const CampaignConfig& cfg) {
  plant::PlantConfig pc =
      cfg.plant_config_path.empty() ? plant::PlantConfig::defaults() : plant::load_plant_config(cfg.plant_config_path);
  pc.speed_points = cfg.speed_points;
  pc.fuel_points = cfg.fuel_points;
  pc.validate();
  return pc;
}

surrogate::Surrogate campaign_surrogate(const CampaignConfig& cfg, surrogate::TrainResult* report) {
  if (!cfg.surrogate_path.empty()) return surrogate::load_surrogate(cfg.surrogate_path);
  const auto samples = surrogate::synthetic_dataset(cfg.synthetic_samples, cfg.data_seed);
  const auto data = surrogate::split_dataset(samples, {0.70, 0.15, 0.15}, cfg.data_seed);
  const surrogate::TrainResult tr = surrogate::train(data, cfg.training);
  if (report) *report = tr;
  return {tr.net, tr.stats};
}

std::uint64_t region_seed(std::uint64_t campaign_seed, int region) {
  return splitmix64(splitmix64(campaign_seed) ^ static_cast<std::uint64_t>(region));
}

std::string gains_file_name(int region) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "gains_region_%02d.json", region);
  return buf;
}

std::string trace_file_name(int region) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "trace_region_%02d.csv", region);
  return buf;
}

int CampaignReport::failed() const {
  return static_cast<int>(std::count_if(regions.begin(), regions.end(), [](const RegionOutcome& r) { return !r.ok; }));
}

json CampaignReport::to_json() const {
  json rows = json::array();
  for (const RegionOutcome& r : regions) {
    json row{{"region", r.region}, {"ok", r.ok}, {"seed", r.seed}};
    if (r.ok) {
      row["initial_cost"] = r.initial_cost;
      row["final_cost"] = r.final_cost;
      row["reduction"] = r.initial_cost - r.final_cost;
      row["promising_index"] = r.trace.promising_index;
      row["batch_costs"] = r.trace.batch_costs;
      row["gains_file"] = gains_file_name(r.region);
      row["trace_file"] = trace_file_name(r.region);
    } else {
      row["error"] = r.error;
    }
    rows.push_back(std::move(row));
  }
  return json{{"regions", rows}, {"failed", failed()}};
}

CampaignReport run_tuning_campaign(const CampaignConfig& cfg, const std::vector<plant::RegionModel>& grid,
                                   const plant::PlantConfig& plant, const std::vector<surrogate::Surrogate>& surrogates,
                                   const std::string& out_dir) {
  std::vector<int> regions = cfg.regions;
  if (regions.empty())
    for (const auto& g : grid) regions.push_back(g.index);
  for (int r : regions)
    if (r < 1 || r > static_cast<int>(grid.size()))
      throw PreconditionError("region " + std::to_string(r) + " is not in the grid");
  if (cfg.shared_surrogate ? surrogates.size() != 1 : surrogates.size() != grid.size())
    throw PreconditionError(cfg.shared_surrogate ? "a shared campaign needs exactly one surrogate"
                                                 : "per-region surrogates: one network per grid region required");
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  CampaignReport report;
  report.regions.resize(regions.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < regions.size(); i = next++) {
      RegionOutcome& out = report.regions[i];
      out.region = regions[i];
      out.seed = region_seed(cfg.seed, out.region);
      try {
        const tuner::StepExperiment exp = tuner::make_step_experiment(grid, out.region, plant, cfg.experiment);
        tuner::TunerConfig tcfg = cfg.tuner;
        tcfg.seed = out.seed;
        const surrogate::Surrogate& sur =
            cfg.shared_surrogate ? surrogates.front() : surrogates[static_cast<std::size_t>(out.region - 1)];
        tuner::TuneResult res = tuner::tune_region(exp, sur, tcfg);
        out.initial_cost = res.trace.initial_cost();
        out.final_cost = res.best_cost;
        out.gains = std::move(res.best);
        out.trace = std::move(res.trace);
        if (!out_dir.empty()) {
          mpc::save_gains(out.gains, (std::filesystem::path(out_dir) / gains_file_name(out.region)).string());
          tuner::save_trace_csv(out.trace, (std::filesystem::path(out_dir) / trace_file_name(out.region)).string());
        }
        out.ok = true;
      } catch (const std::exception& e) {
        out.ok = false;
        out.error = e.what();
      }
    }
  };
  const int threads = std::max(1, std::min<int>(cfg.parallel, static_cast<int>(regions.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  if (!out_dir.empty()) {
    std::ofstream os(std::filesystem::path(out_dir) / "report.json");
    os << report.to_json().dump(2) << '\n';
  }
  if (!regions.empty() && report.failed() == static_cast<int>(regions.size()))
    throw TuningError("every region failed; first error: " + report.regions.front().error);
  return report;
}

}  // namespace mpctune::harness
