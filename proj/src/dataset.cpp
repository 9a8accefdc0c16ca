#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "mpctune/errors.hpp"
#include "mpctune/surrogate_cost.hpp"

namespace mpctune::surrogate {

namespace {

// Largest-remainder apportionment of n items to the three ratios.
std::array<std::size_t, 3> apportion(std::size_t n, const std::array<double, 3>& ratios) {
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> rem{};
  std::size_t used = 0;
  for (int s = 0; s < 3; ++s) {
    const double exact = ratios[s] * static_cast<double>(n);
    counts[s] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    rem[s] = exact - static_cast<double>(counts[s]);
    used += counts[s];
  }
  while (used < n) {
    int best = 0;
    for (int s = 1; s < 3; ++s)
      if (rem[s] > rem[best] + 1e-12) best = s;
    ++counts[best];
    rem[best] = -1.0;
    ++used;
  }
  return counts;
}

}  // namespace

std::string to_string(Source s) { return s == Source::kHuman ? "human" : "synthetic"; }

Source source_from_string(const std::string& s) {
  if (s == "human") return Source::kHuman;
  if (s == "synthetic") return Source::kSynthetic;
  throw PreconditionError("unknown sample source '" + s + "'");
}

std::vector<std::size_t> Dataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i)
    if (split[i] == s) out.push_back(i);
  return out;
}

Dataset split_dataset(std::vector<LabeledSample> samples, const std::array<double, 3>& ratios,
                      std::uint64_t seed) {
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9 ||
      std::any_of(ratios.begin(), ratios.end(), [](double r) { return r < 0.0; }))
    throw PreconditionError("split ratios must be nonnegative and sum to 1");

  Dataset ds;
  ds.samples = std::move(samples);
  ds.split.assign(ds.samples.size(), Split::kTrain);
  std::mt19937_64 rng(seed);

  // Per-source apportionment, then a global correction so the totals match
  // the apportionment of the whole set.
  std::array<std::vector<std::size_t>, 2> groups;
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    groups[ds.samples[i].source == Source::kHuman ? 0 : 1].push_back(i);
  std::array<std::array<std::size_t, 3>, 2> counts{};
  std::array<std::size_t, 3> total{};
  for (int g = 0; g < 2; ++g) {
    counts[g] = apportion(groups[g].size(), ratios);
    for (int s = 0; s < 3; ++s) total[s] += counts[g][s];
  }
  const auto target = apportion(ds.samples.size(), ratios);
  for (int s = 0; s < 3; ++s) {
    while (total[s] > target[s]) {
      int to = 0;
      while (total[to] >= target[to]) ++to;
      const int g = counts[1][s] > 0 ? 1 : 0;
      --counts[g][s];
      ++counts[g][to];
      --total[s];
      ++total[to];
    }
  }

  for (int g = 0; g < 2; ++g) {
    std::vector<std::size_t> idx = groups[g];
    std::shuffle(idx.begin(), idx.end(), rng);
    std::size_t k = 0;
    for (int s = 0; s < 3; ++s)
      for (std::size_t c = 0; c < counts[g][s]; ++c) ds.split[idx[k++]] = static_cast<Split>(s);
  }
  for (int s = 0; s < 3; ++s)
    if (ratios[s] > 0.0 && total[s] == 0)
      throw PreconditionError("split " + std::to_string(s) + " is empty despite a nonzero ratio");

  std::vector<FeatureVector> train_rows;
  for (std::size_t i : ds.indices(Split::kTrain)) train_rows.push_back(ds.samples[i].features);
  ds.stats = NormStats::fit(train_rows);
  return ds;
}

nlohmann::json dataset_header() {
  return nlohmann::json{{"type", "header"},
                        {"schema", "mpctune.labeled_samples"},
                        {"version", 1},
                        {"features", features::feature_names()},
                        {"grade_scale", {0.0, kGradeMax}}};
}

nlohmann::json sample_to_json(const LabeledSample& s) {
  return nlohmann::json{{"trajectory_id", s.trajectory_id},
                        {"features", s.features},
                        {"grade", s.grade},
                        {"source", to_string(s.source)}};
}

LabeledSample sample_from_json(const nlohmann::json& j) {
  try {
    LabeledSample s;
    s.trajectory_id = j.at("trajectory_id").get<std::string>();
    s.features = j.at("features").get<FeatureVector>();
    s.grade = j.at("grade").get<double>();
    s.source = source_from_string(j.at("source").get<std::string>());
    if (!(s.grade >= 0.0 && s.grade <= kGradeMax)) throw PreconditionError("grade outside [0, 10]");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw PreconditionError(std::string("sample record: ") + e.what());
  }
}

void save_dataset(const std::vector<LabeledSample>& samples, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path);
  os << dataset_header().dump() << '\n';
  for (const auto& s : samples) os << sample_to_json(s).dump() << '\n';
  if (!os) throw Error("write failed: " + path);
}

std::vector<LabeledSample> load_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read " + path);
  std::vector<LabeledSample> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw PreconditionError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (j.value("type", "") == "header") continue;
    out.push_back(sample_from_json(j));
  }
  return out;
}

}  // namespace mpctune::surrogate
