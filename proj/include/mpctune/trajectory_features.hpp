#pragma once

// Step-response feature extractor: turns a two-output closed-loop step
// response into eight scalar step metrics.

#include <array>
#include <random>
#include <string>
#include <vector>

namespace mpctune::features {

inline constexpr int kNumOutputs = 2;
inline constexpr int kFeaturesPerOutput = 4;
inline constexpr int kFeatureDim = kNumOutputs * kFeaturesPerOutput;

/// Layout per output (y1 block first, then y2).
enum FeatureKind : int { kOvershoot = 0, kUndershoot = 1, kSettling = 2, kSteadyError = 3 };

inline constexpr int feature_index(int output, FeatureKind kind) {
  return output * kFeaturesPerOutput + kind;
}

using FeatureVector = std::array<double, kFeatureDim>;

/// Names in layout order, e.g. "y1_overshoot".
const std::array<std::string, kFeatureDim>& feature_names();

struct StepReference {
  double start = 0.0;
  double final = 0.0;
};

/// Uniformly sampled response to a step applied at t = 0. `time` holds the
/// sample instants (time since the step); `window` is the reference duration.
struct StepResponse {
  std::string id;
  std::vector<double> time;
  std::array<std::vector<double>, kNumOutputs> y;
  std::array<StepReference, kNumOutputs> ref;
  double window = 0.0;

  std::size_t size() const { return time.size(); }
  /// Reference value of output k at time t (start before the step, final after).
  double reference_at(int k, double t) const { return t < 0.0 ? ref[k].start : ref[k].final; }
};

struct ToleranceConfig {
  double band_fraction = 0.01;       // settling band, fraction of |step|
  double noise_fraction = 0.0025;    // extra band for measurement noise, fraction of |step|
  double excursion_fraction = 0.02;  // outside-band runs shorter than this fraction of the window are ignored
  double tail_fraction = 0.10;       // steady-state value = mean of this final fraction of samples
};

/// Throws DegenerateStepError if a reference does not move and
/// PreconditionError for a non-uniform, too short or non-finite response.
FeatureVector extract_features(const StepResponse& resp, const ToleranceConfig& tol = {});

/// Per-entry standardisation statistics (from the training split).
struct NormStats {
  FeatureVector mean{};
  FeatureVector scale{};

  static NormStats identity();
  static NormStats fit(const std::vector<FeatureVector>& rows);
};

FeatureVector normalize_features(const FeatureVector& fv, const NormStats& stats);
FeatureVector denormalize_features(const FeatureVector& z, const NormStats& stats);

// --- synthetic templates ---------------------------------------------------------

/// Parameterised step-response shape: (1 + gain_error) times the unit-step
/// response of (1 - zero s) wn^2 / (s^2 + 2 zeta wn s + wn^2), plus white noise.
struct TemplateParams {
  double zeta = 0.7;
  double wn = 2.0;          // rad/s
  double zero = 0.0;        // >= 0; a right-half-plane zero produces undershoot
  double gain_error = 0.0;  // steady-state offset as a fraction of the step
  double noise_std = 0.0;   // fraction of the step
};

/// Unit-step response of the template's noise-free shape at time t >= 0.
double template_shape(const TemplateParams& p, double t);

/// Draws template parameters spanning well-damped to poor responses.
TemplateParams sample_template(std::mt19937_64& rng);

/// Samples t = k window / n, k = 1..n.
StepResponse template_response(const std::array<TemplateParams, kNumOutputs>& params,
                               const std::array<StepReference, kNumOutputs>& ref, double window, int n,
                               unsigned long long noise_seed = 0);

// --- io --------------------------------------------------------------------------

/// CSV columns t,y1,y2 plus a JSON sidecar {id, r1:[start,final], r2:[start,final], window}.
void save_step_response(const StepResponse& resp, const std::string& csv_path,
                        const std::string& sidecar_path);
StepResponse load_step_response(const std::string& csv_path, const std::string& sidecar_path);

}  // namespace mpctune::features
