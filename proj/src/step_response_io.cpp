#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "mpctune/errors.hpp"
#include "mpctune/trajectory_features.hpp"

namespace mpctune::features {

void save_step_response(const StepResponse& resp, const std::string& csv_path,
                        const std::string& sidecar_path) {
  std::ofstream csv(csv_path);
  if (!csv) throw Error("cannot write " + csv_path);
  csv << std::setprecision(std::numeric_limits<double>::max_digits10);
  csv << "t,y1,y2\n";
  for (std::size_t i = 0; i < resp.size(); ++i)
    csv << resp.time[i] << ',' << resp.y[0][i] << ',' << resp.y[1][i] << '\n';
  if (!csv) throw Error("write failed: " + csv_path);

  nlohmann::json side{{"id", resp.id},
                      {"r1", {resp.ref[0].start, resp.ref[0].final}},
                      {"r2", {resp.ref[1].start, resp.ref[1].final}},
                      {"window", resp.window}};
  std::ofstream js(sidecar_path);
  if (!js) throw Error("cannot write " + sidecar_path);
  js << side.dump(2) << '\n';
}

StepResponse load_step_response(const std::string& csv_path, const std::string& sidecar_path) {
  StepResponse resp;
  std::ifstream csv(csv_path);
  if (!csv) throw Error("cannot read " + csv_path);
  std::string line;
  if (!std::getline(csv, line)) throw PreconditionError(csv_path + ": empty file");
  int lineno = 1;
  while (std::getline(csv, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream is(line);
    double v[3];
    char c1 = 0, c2 = 0;
    if (!(is >> v[0] >> c1 >> v[1] >> c2 >> v[2]) || c1 != ',' || c2 != ',')
      throw PreconditionError(csv_path + ":" + std::to_string(lineno) + ": malformed row");
    resp.time.push_back(v[0]);
    resp.y[0].push_back(v[1]);
    resp.y[1].push_back(v[2]);
  }

  std::ifstream js(sidecar_path);
  if (!js) throw Error("cannot read " + sidecar_path);
  nlohmann::json side;
  try {
    js >> side;
    resp.id = side.value("id", std::string{});
    resp.ref[0] = {side.at("r1").at(0).get<double>(), side.at("r1").at(1).get<double>()};
    resp.ref[1] = {side.at("r2").at(0).get<double>(), side.at("r2").at(1).get<double>()};
    resp.window = side.at("window").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw PreconditionError(sidecar_path + ": " + e.what());
  }
  return resp;
}

}  // namespace mpctune::features
