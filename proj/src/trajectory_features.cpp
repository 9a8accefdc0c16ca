#include "mpctune/trajectory_features.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mpctune/errors.hpp"

namespace mpctune::features {

namespace {

struct OutputFeatures {
  double overshoot = 0.0;
  double undershoot = 0.0;
  double settling = 0.0;
  double steady_error = 0.0;
};

void check_response(const StepResponse& resp) {
  const std::size_t n = resp.time.size();
  if (n < 32) throw PreconditionError("step response needs at least 32 samples");
  for (const auto& y : resp.y)
    if (y.size() != n) throw PreconditionError("output and time columns differ in length");
  if (!(resp.window > 0.0) || !std::isfinite(resp.window))
    throw PreconditionError("step response window must be positive");
  const double dt = (resp.time.back() - resp.time.front()) / static_cast<double>(n - 1);
  if (!(dt > 0.0)) throw PreconditionError("time grid must be increasing");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(resp.time[i]) || !std::isfinite(resp.y[0][i]) || !std::isfinite(resp.y[1][i]))
      throw PreconditionError("step response contains non-finite values");
    if (i > 0 && std::abs((resp.time[i] - resp.time[i - 1]) - dt) > 1e-6 * dt)
      throw PreconditionError("time grid is not uniform");
  }
  for (const auto& r : resp.ref)
    if (!std::isfinite(r.start) || !std::isfinite(r.final))
      throw PreconditionError("step reference is not finite");
}

// Works on the mirrored, normalised response z = sign(dr) (y - r_start) / |dr|,
// which steps from 0 to 1 regardless of the original offset, scale or direction.
OutputFeatures output_features(const std::vector<double>& time, const std::vector<double>& y,
                               const StepReference& ref, double window, const ToleranceConfig& tol) {
  const double dr = ref.final - ref.start;
  if (dr == 0.0) throw DegenerateStepError("step reference does not move");
  const double sign = dr > 0.0 ? 1.0 : -1.0;
  const double mag = std::abs(dr);
  const std::size_t n = time.size();
  const double dt = (time.back() - time.front()) / static_cast<double>(n - 1);

  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = sign * (y[i] - ref.start) / mag;

  const auto tail = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(tol.tail_fraction * static_cast<double>(n))));
  const double z_ss = std::accumulate(z.end() - static_cast<std::ptrdiff_t>(tail), z.end(), 0.0) / static_cast<double>(tail);

  OutputFeatures out;
  out.overshoot = std::max(0.0, *std::max_element(z.begin(), z.end()) - z_ss);
  out.undershoot = std::max(0.0, -*std::min_element(z.begin(), z.end()));
  out.steady_error = std::abs(z_ss - 1.0);

  const double band = tol.band_fraction + tol.noise_fraction;
  const double min_run = tol.excursion_fraction * window;
  std::vector<char> outside(n);
  for (std::size_t i = 0; i < n; ++i) outside[i] = std::abs(z[i] - z_ss) > band;

  // Last sample of the last outside-band run that counts. Runs touching the
  // first sample are the transient itself and always count.
  std::ptrdiff_t last_out = -1;
  for (std::size_t i = 0; i < n;) {
    if (!outside[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < n && outside[j + 1]) ++j;
    const double duration = static_cast<double>(j - i + 1) * dt;
    if (i == 0 || duration >= min_run) last_out = static_cast<std::ptrdiff_t>(j);
    i = j + 1;
  }

  double settle;
  if (last_out < 0) {
    settle = time.front();
  } else if (static_cast<std::size_t>(last_out) + 1 >= n) {
    settle = window;
  } else {
    const auto e = static_cast<std::size_t>(last_out);
    const double d0 = std::abs(z[e] - z_ss);
    const double d1 = std::abs(z[e + 1] - z_ss);
    const double frac = d0 > d1 ? std::clamp((d0 - band) / (d0 - d1), 0.0, 1.0) : 1.0;
    settle = time[e] + frac * dt;
  }
  settle = std::clamp(settle, dt, window);
  out.settling = settle / window;
  return out;
}

}  // namespace

const std::array<std::string, kFeatureDim>& feature_names() {
  static const std::array<std::string, kFeatureDim> names{
      "y1_overshoot", "y1_undershoot", "y1_settling", "y1_ss_error",
      "y2_overshoot", "y2_undershoot", "y2_settling", "y2_ss_error"};
  return names;
}

FeatureVector extract_features(const StepResponse& resp, const ToleranceConfig& tol) {
  check_response(resp);
  FeatureVector fv{};
  for (int k = 0; k < kNumOutputs; ++k) {
    const OutputFeatures of = output_features(resp.time, resp.y[k], resp.ref[k], resp.window, tol);
    fv[feature_index(k, kOvershoot)] = of.overshoot;
    fv[feature_index(k, kUndershoot)] = of.undershoot;
    fv[feature_index(k, kSettling)] = of.settling;
    fv[feature_index(k, kSteadyError)] = of.steady_error;
  }
  return fv;
}

NormStats NormStats::identity() {
  NormStats s;
  s.mean.fill(0.0);
  s.scale.fill(1.0);
  return s;
}

NormStats NormStats::fit(const std::vector<FeatureVector>& rows) {
  if (rows.empty()) throw PreconditionError("cannot fit normalisation on an empty set");
  NormStats s;
  s.mean.fill(0.0);
  s.scale.fill(0.0);
  const double n = static_cast<double>(rows.size());
  for (const auto& r : rows)
    for (int i = 0; i < kFeatureDim; ++i) s.mean[i] += r[i] / n;
  for (const auto& r : rows)
    for (int i = 0; i < kFeatureDim; ++i) s.scale[i] += (r[i] - s.mean[i]) * (r[i] - s.mean[i]) / n;
  // Constant columns keep unit scale.
  for (int i = 0; i < kFeatureDim; ++i) s.scale[i] = s.scale[i] > 1e-24 ? std::sqrt(s.scale[i]) : 1.0;
  return s;
}

FeatureVector normalize_features(const FeatureVector& fv, const NormStats& stats) {
  FeatureVector z{};
  for (int i = 0; i < kFeatureDim; ++i) {
    if (!(stats.scale[i] > 0.0)) throw PreconditionError("normalisation scale must be > 0");
    z[i] = (fv[i] - stats.mean[i]) / stats.scale[i];
  }
  return z;
}

FeatureVector denormalize_features(const FeatureVector& z, const NormStats& stats) {
  FeatureVector fv{};
  for (int i = 0; i < kFeatureDim; ++i) {
    if (!(stats.scale[i] > 0.0)) throw PreconditionError("normalisation scale must be > 0");
    fv[i] = z[i] * stats.scale[i] + stats.mean[i];
  }
  return fv;
}

}  // namespace mpctune::features
