// mpctune: command line front end for the tuning workbench.
//
//   mpctune grid build             [--config c.json] [--out dir]
//   mpctune trajectories generate  [--mode synthetic|closed-loop] [--count n]
//   mpctune surrogate train        [--dataset rows.jsonl]
//   mpctune tune (--region i | --all) [--parallel n]
//   mpctune simulate --schedule (file.csv | bundled) [--gains dir]
//   mpctune serve --dataset store.jsonl [--candidates dir] [--port p]
//
// Exit status: 0 success, 2 some regions failed, 1 fatal error.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "mpctune/labeling_service.hpp"
#include "mpctune/tuning_harness.hpp"

namespace fs = std::filesystem;
using namespace mpctune;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFatal = 1;
constexpr int kExitPartial = 2;

struct Common {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> parallel;
};

harness::CampaignConfig campaign(const Common& c) {
  harness::CampaignConfig cfg = c.config.empty() ? harness::CampaignConfig{} : harness::load_campaign_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.parallel) cfg.parallel = *c.parallel;
  return cfg;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p);
  if (!os) throw Error("cannot write " + p.string());
  os << text;
  if (!os) throw Error("write failed: " + p.string());
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

json metrics_json(const surrogate::Metrics& m) { return {{"mse", m.mse}, {"r2", m.r2}}; }

int grid_build(const Common& c) {
  const auto cfg = campaign(c);
  const auto plant = harness::campaign_plant(cfg);
  const auto grid = plant::build_region_grid(plant);
  fs::create_directories(c.out);
  write_text(fs::path(c.out) / "plant_config.json", plant::plant_config_to_json_text(plant));
  plant::save_region_grid(grid, (fs::path(c.out) / "region_grid.json").string());
  write_text(fs::path(c.out) / "bundled_schedule.csv", harness::schedule_to_csv(harness::bundled_schedule(grid)));
  std::printf("%zu regions -> %s\n", grid.size(), c.out.c_str());
  return kExitOk;
}

int trajectories_generate(const Common& c, const std::string& mode, int count) {
  const auto cfg = campaign(c);
  const auto plant = harness::campaign_plant(cfg);
  const auto grid = plant::build_region_grid(plant);
  harness::SamplerConfig sc;
  sc.mode = harness::sampler_mode_from_string(mode);
  sc.count = count;
  sc.seed = cfg.seed;
  sc.regions = cfg.regions;
  sc.gain_distribution = cfg.tuner;
  const auto set = harness::generate_candidate_trajectories(grid, plant, sc);
  harness::write_candidates(set, c.out);
  for (const auto& why : set.skip_reasons) std::fprintf(stderr, "skipped: %s\n", why.c_str());
  std::printf("%zu trajectories (%d skipped) -> %s\n", set.responses.size(), set.skipped, c.out.c_str());
  return kExitOk;
}

int surrogate_train(const Common& c, const std::string& dataset_path) {
  auto cfg = campaign(c);
  cfg.surrogate_path.clear();
  surrogate::TrainResult tr;
  surrogate::Surrogate s;
  if (dataset_path.empty()) {
    s = harness::campaign_surrogate(cfg, &tr);
  } else {
    const auto data = surrogate::split_dataset(surrogate::load_dataset(dataset_path), {0.70, 0.15, 0.15}, cfg.data_seed);
    tr = surrogate::train(data, cfg.training);
    s = {tr.net, tr.stats};
  }
  fs::create_directories(c.out);
  surrogate::save_surrogate(s, (fs::path(c.out) / "surrogate.json").string());
  write_json(fs::path(c.out) / "training.json", {{"train", metrics_json(tr.train)},
                                                 {"dev", metrics_json(tr.dev)},
                                                 {"test", metrics_json(tr.test)},
                                                 {"best_epoch", tr.best_epoch},
                                                 {"epochs_run", tr.epochs_run}});
  std::printf("test R2 %.4f (best epoch %d) -> %s\n", tr.test.r2, tr.best_epoch, c.out.c_str());
  return kExitOk;
}

int tune(const Common& c, std::optional<int> region, bool all) {
  auto cfg = campaign(c);
  if (region) cfg.regions = {*region};
  else if (all) cfg.regions.clear();
  else if (cfg.regions.empty()) throw PreconditionError("tune: give --region, --all, or a region list in the config");
  const auto plant = harness::campaign_plant(cfg);
  const auto grid = plant::build_region_grid(plant);
  std::vector<surrogate::Surrogate> surrogates;
  if (cfg.shared_surrogate) {
    surrogates.push_back(harness::campaign_surrogate(cfg));
  } else {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      auto per = cfg;
      per.data_seed = cfg.data_seed + i;
      per.training.seed = cfg.training.seed + i;
      surrogates.push_back(harness::campaign_surrogate(per));
    }
  }
  const auto report = harness::run_tuning_campaign(cfg, grid, plant, surrogates, c.out);
  for (const auto& r : report.regions) {
    if (r.ok)
      std::printf("region %2d  cost %.12g -> %.12g\n", r.region, r.initial_cost, r.final_cost);
    else
      std::printf("region %2d  FAILED: %s\n", r.region, r.error.c_str());
  }
  return report.failed() > 0 ? kExitPartial : kExitOk;
}

int simulate(const Common& c, const std::string& schedule_path, const std::string& gains_dir) {
  const auto cfg = campaign(c);
  const auto plant = harness::campaign_plant(cfg);
  const auto grid = plant::build_region_grid(plant);
  const bool bundled = schedule_path == "bundled";
  const auto schedule = bundled ? harness::bundled_schedule(grid) : harness::load_schedule_csv(schedule_path);

  std::map<int, mpc::GainSet> gains;
  for (const auto& reg : grid) {
    const fs::path p = fs::path(gains_dir) / harness::gains_file_name(reg.index);
    gains[reg.index] = !gains_dir.empty() && fs::exists(p)
                           ? mpc::load_gains(p.string())
                           : mpc::GainSet::identity(plant::kStateDim, plant::kInputDim, cfg.tuner.horizon);
  }
  const auto log = harness::run_closed_loop(schedule, gains, grid, plant);
  fs::create_directories(c.out);
  harness::save_log_csv(log, (fs::path(c.out) / "closed_loop.csv").string());
  json summary{{"rows", log.rows.size()}, {"faults", log.fault_count}, {"fault_messages", log.fault_messages}};
  if (bundled) {
    auto settled = harness::bundled_hold_intervals(grid);
    for (auto& [a, b] : settled) a = 0.5 * (a + b);
    summary["tracking_error_settled"] = harness::normalized_tracking_error(log, settled, plant);
  }
  write_json(fs::path(c.out) / "closed_loop_summary.json", summary);
  std::printf("%zu samples, %d faults -> %s\n", log.rows.size(), log.fault_count, c.out.c_str());
  return kExitOk;
}

std::vector<labeling::QueueEntry> load_candidates(const std::string& dir) {
  std::vector<labeling::QueueEntry> out;
  if (dir.empty()) return out;
  std::vector<fs::path> csvs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".csv") csvs.push_back(e.path());
  std::sort(csvs.begin(), csvs.end());
  for (const auto& csv : csvs) {
    fs::path sidecar = csv;
    sidecar.replace_extension(".json");
    if (!fs::exists(sidecar)) continue;
    out.push_back({features::load_step_response(csv.string(), sidecar.string()), csv.string()});
  }
  return out;
}

labeling::LabelingServer* g_server = nullptr;

int serve(const Common& c, const std::string& dataset, const std::string& candidates, const std::string& host,
          int port) {
  const auto cfg = campaign(c);
  labeling::LabelingConfig lc;
  lc.seed = cfg.seed;
  const auto base = surrogate::synthetic_dataset(cfg.synthetic_samples, cfg.data_seed);
  labeling::LabelingService service(dataset, lc, base);
  service.enqueue(load_candidates(candidates));
  labeling::LabelingServer server(service);
  const int bound = server.bind(host, port);
  std::printf("serving %zu items on http://%s:%d\n", service.size(), host.c_str(), bound);
  std::fflush(stdout);
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  server.listen();
  g_server = nullptr;
  return kExitOk;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "campaign configuration (JSON)")->check(CLI::ExistingFile);
  app->add_option("--out", c.out, "output directory");
  app->add_option("--seed", c.seed, "overrides the configured seed");
  app->add_option("--parallel", c.parallel, "worker threads")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MPC gain tuning workbench"};
  app.require_subcommand(1);
  Common common;
  std::function<int()> action;

  auto* grid = app.add_subcommand("grid", "operating-point grid");
  grid->require_subcommand(1);
  auto* grid_build_cmd = grid->add_subcommand("build", "linearise and discretise every region");
  add_common(grid_build_cmd, common);
  grid_build_cmd->callback([&] { action = [&] { return grid_build(common); }; });

  auto* traj = app.add_subcommand("trajectories", "candidate step responses");
  traj->require_subcommand(1);
  auto* traj_gen = traj->add_subcommand("generate", "sample candidate trajectories");
  add_common(traj_gen, common);
  std::string mode = "synthetic";
  int count = 100;
  traj_gen->add_option("--mode", mode, "synthetic or closed-loop")
      ->check(CLI::IsMember({"synthetic", "closed-loop"}));
  traj_gen->add_option("--count", count, "number of trajectories")->check(CLI::PositiveNumber);
  traj_gen->callback([&] { action = [&] { return trajectories_generate(common, mode, count); }; });

  auto* sur = app.add_subcommand("surrogate", "learned cost");
  sur->require_subcommand(1);
  auto* sur_train = sur->add_subcommand("train", "fit the surrogate network");
  add_common(sur_train, common);
  std::string dataset;
  sur_train->add_option("--dataset", dataset, "labelled rows (JSON lines); default: synthetic labeller")
      ->check(CLI::ExistingFile);
  sur_train->callback([&] { action = [&] { return surrogate_train(common, dataset); }; });

  auto* tune_cmd = app.add_subcommand("tune", "tune MPC gains per region");
  add_common(tune_cmd, common);
  std::optional<int> region;
  bool all = false;
  auto* region_opt = tune_cmd->add_option("--region", region, "single region (1-based); without --region or --all the configured list is used");
  auto* all_flag = tune_cmd->add_flag("--all", all, "every region");
  region_opt->excludes(all_flag);
  tune_cmd->callback([&] { action = [&] { return tune(common, region, all); }; });

  auto* sim = app.add_subcommand("simulate", "switched closed-loop drive cycle");
  add_common(sim, common);
  std::string schedule, gains_dir;
  sim->add_option("--schedule", schedule, "schedule CSV (t,speed,fuel,r1,r2) or 'bundled'")->required();
  sim->add_option("--gains", gains_dir, "directory of gains_region_XX.json; missing regions use identity gains");
  sim->callback([&] { action = [&] { return simulate(common, schedule, gains_dir); }; });

  auto* srv = app.add_subcommand("serve", "labelling service");
  add_common(srv, common);
  std::string store, candidates, host = "127.0.0.1";
  int port = 8080;
  srv->add_option("--dataset", store, "label store (JSON lines), created if missing")->required();
  srv->add_option("--candidates", candidates, "directory of trajectories to enqueue")->check(CLI::ExistingDirectory);
  srv->add_option("--host", host);
  srv->add_option("--port", port)->check(CLI::Range(0, 65535));
  srv->callback([&] { action = [&] { return serve(common, store, candidates, host, port); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitFatal;
  }
  try {
    return action();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFatal;
  }
}
