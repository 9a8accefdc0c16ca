#include <fstream>
#include <sstream>

#include "mpctune/errors.hpp"
#include "mpctune/json_eigen.hpp"
#include "mpctune/plant_model.hpp"

namespace mpctune::plant {

using nlohmann::json;
using jsonio::matrix_to_json;
using jsonio::read_fixed;
using jsonio::vector_to_json;

namespace {

json theta_to_json(const OperatingPoint& th) { return json::array({th.speed, th.fuel}); }

OperatingPoint theta_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2) throw DomainError("operating point must be [speed, fuel]");
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

PlantConfig plant_config_from_json_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw DomainError(std::string("plant config: ") + e.what());
  }
  // Every key is optional; missing keys keep the documented defaults.
  PlantConfig cfg = PlantConfig::defaults();
  try {
    read_fixed(doc, "a0", cfg.a0);
    read_fixed(doc, "a_speed", cfg.a_speed);
    read_fixed(doc, "a_fuel", cfg.a_fuel);
    read_fixed(doc, "b0", cfg.b0);
    read_fixed(doc, "b_speed", cfg.b_speed);
    read_fixed(doc, "b_fuel", cfg.b_fuel);
    read_fixed(doc, "x_eq0", cfg.x_eq0);
    read_fixed(doc, "x_eq_speed", cfg.x_eq_speed);
    read_fixed(doc, "x_eq_fuel", cfg.x_eq_fuel);
    read_fixed(doc, "u_eq0", cfg.u_eq0);
    read_fixed(doc, "u_eq_speed", cfg.u_eq_speed);
    read_fixed(doc, "u_eq_fuel", cfg.u_eq_fuel);
    if (doc.contains("nonlinear")) {
      const auto& nl = doc["nonlinear"];
      if (!nl.is_array() || nl.size() != 4) throw DomainError("nonlinear: expected 4 coefficients");
      for (std::size_t i = 0; i < 4; ++i) cfg.nonlinear[i] = nl[i].get<double>();
    }
    if (doc.contains("state_box")) {
      read_fixed(doc["state_box"], "lo", cfg.state_box.lo);
      read_fixed(doc["state_box"], "hi", cfg.state_box.hi);
    }
    if (doc.contains("input_box")) {
      read_fixed(doc["input_box"], "lo", cfg.input_box.lo);
      read_fixed(doc["input_box"], "hi", cfg.input_box.hi);
    }
    if (doc.contains("theta_lo")) cfg.theta_lo = theta_from_json(doc["theta_lo"]);
    if (doc.contains("theta_hi")) cfg.theta_hi = theta_from_json(doc["theta_hi"]);
    cfg.speed_points = doc.value("speed_points", cfg.speed_points);
    cfg.fuel_points = doc.value("fuel_points", cfg.fuel_points);
    cfg.sample_time = doc.value("sample_time", cfg.sample_time);
    cfg.rk4_substeps = doc.value("rk4_substeps", cfg.rk4_substeps);
    cfg.hysteresis = doc.value("hysteresis", cfg.hysteresis);
    cfg.output_noise_std = doc.value("output_noise_std", cfg.output_noise_std);
    cfg.noise_seed = doc.value("noise_seed", cfg.noise_seed);
  } catch (const json::exception& e) {
    throw DomainError(std::string("plant config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

PlantConfig load_plant_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open plant config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return plant_config_from_json_text(ss.str());
}

std::string plant_config_to_json_text(const PlantConfig& cfg) {
  json doc;
  doc["a0"] = matrix_to_json(cfg.a0);
  doc["a_speed"] = matrix_to_json(cfg.a_speed);
  doc["a_fuel"] = matrix_to_json(cfg.a_fuel);
  doc["b0"] = matrix_to_json(cfg.b0);
  doc["b_speed"] = matrix_to_json(cfg.b_speed);
  doc["b_fuel"] = matrix_to_json(cfg.b_fuel);
  doc["x_eq0"] = vector_to_json(cfg.x_eq0);
  doc["x_eq_speed"] = vector_to_json(cfg.x_eq_speed);
  doc["x_eq_fuel"] = vector_to_json(cfg.x_eq_fuel);
  doc["u_eq0"] = vector_to_json(cfg.u_eq0);
  doc["u_eq_speed"] = vector_to_json(cfg.u_eq_speed);
  doc["u_eq_fuel"] = vector_to_json(cfg.u_eq_fuel);
  doc["nonlinear"] = cfg.nonlinear;
  doc["state_box"] = {{"lo", vector_to_json(cfg.state_box.lo)}, {"hi", vector_to_json(cfg.state_box.hi)}};
  doc["input_box"] = {{"lo", vector_to_json(cfg.input_box.lo)}, {"hi", vector_to_json(cfg.input_box.hi)}};
  doc["theta_lo"] = theta_to_json(cfg.theta_lo);
  doc["theta_hi"] = theta_to_json(cfg.theta_hi);
  doc["speed_points"] = cfg.speed_points;
  doc["fuel_points"] = cfg.fuel_points;
  doc["sample_time"] = cfg.sample_time;
  doc["rk4_substeps"] = cfg.rk4_substeps;
  doc["hysteresis"] = cfg.hysteresis;
  doc["output_noise_std"] = cfg.output_noise_std;
  doc["noise_seed"] = cfg.noise_seed;
  return doc.dump(2);
}

std::string region_grid_to_json_text(const std::vector<RegionModel>& grid) {
  json regions = json::array();
  for (const RegionModel& reg : grid) {
    regions.push_back({
        {"index", reg.index},
        {"theta", theta_to_json(reg.theta)},
        {"sample_time", reg.sample_time},
        {"A", matrix_to_json(reg.a)},
        {"B", matrix_to_json(reg.b)},
        {"C", matrix_to_json(reg.c)},
        {"D", matrix_to_json(reg.d)},
        {"A_cont", matrix_to_json(reg.a_cont)},
        {"B_cont", matrix_to_json(reg.b_cont)},
        {"x_star", vector_to_json(reg.x_star)},
        {"u_star", vector_to_json(reg.u_star)},
        {"r_star", vector_to_json(reg.r_star)},
    });
  }
  return json{{"regions", regions}}.dump(2);
}

void save_region_grid(const std::vector<RegionModel>& grid, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << region_grid_to_json_text(grid) << '\n';
}

}  // namespace mpctune::plant
