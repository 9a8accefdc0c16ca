#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "mpctune/errors.hpp"
#include "mpctune/surrogate_cost.hpp"

namespace mpctune::surrogate {

double grade_to_cost(double grade) {
  if (!(grade >= 0.0 && grade <= kGradeMax))
    throw PreconditionError("grade " + std::to_string(grade) + " outside [0, 10]");
  return (kGradeMax - grade) / kGradeMax;
}

double synth_label(const FeatureVector& f, const SynthWeights& w) {
  const std::array<double, features::kFeaturesPerOutput> weight{w.overshoot, w.undershoot, w.settling,
                                                                w.steady_error};
  double penalty = 0.0;
  for (int i = 0; i < features::kFeatureDim; ++i) {
    const double z = std::max(0.0, f[i]);
    penalty += weight[static_cast<std::size_t>(i % features::kFeaturesPerOutput)] * (z + z * z);
  }
  return std::clamp(kGradeMax - penalty, 0.0, kGradeMax);
}

std::vector<LabeledSample> synthetic_dataset(int n, std::uint64_t seed, const SynthWeights& w) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> level(0.2, 0.8), step(0.05, 0.3);
  std::bernoulli_distribution down(0.5);
  std::vector<LabeledSample> out;
  out.reserve(static_cast<std::size_t>(std::max(0, n)));
  for (int i = 0; i < n; ++i) {
    std::array<features::TemplateParams, features::kNumOutputs> params;
    std::array<features::StepReference, features::kNumOutputs> ref;
    for (int o = 0; o < features::kNumOutputs; ++o) {
      params[o] = features::sample_template(rng);
      const double a = level(rng), d = step(rng);
      ref[o] = {a, down(rng) ? a - d : a + d};
    }
    const auto resp = features::template_response(params, ref, 8.0, 80, rng());
    LabeledSample s;
    char id[16];
    std::snprintf(id, sizeof id, "s-%06d", i);
    s.trajectory_id = id;
    s.features = features::extract_features(resp);
    s.grade = synth_label(s.features, w);
    s.source = Source::kSynthetic;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace mpctune::surrogate
