#pragma once

// Learned grader cost: an 8 -> 24 -> 8 -> 1 feedforward regressor on
// normalised step-response features, its training loop, the labelled dataset
// it is trained on and a synthetic monotone labeller.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "mpctune/trajectory_features.hpp"

namespace mpctune::surrogate {

using features::FeatureVector;
using features::NormStats;

inline constexpr int kIn = features::kFeatureDim;
inline constexpr int kH1 = 24;
inline constexpr int kH2 = 8;
inline constexpr int kParamCount = kIn * kH1 + kH1 + kH1 * kH2 + kH2 + kH2 + 1;  // 425

// --- network -------------------------------------------------------------------

/// tanh hidden layers, softplus output. Also used as the gradient container.
struct NetworkParams {
  Eigen::Matrix<double, kH1, kIn> w1;
  Eigen::Matrix<double, kH1, 1> b1;
  Eigen::Matrix<double, kH2, kH1> w2;
  Eigen::Matrix<double, kH2, 1> b2;
  Eigen::Matrix<double, 1, kH2> w3;
  double b3 = 0.0;

  static NetworkParams zeros();
  /// Flattened in the order w1, b1, w2, b2, w3, b3 (matrices column-major).
  Eigen::VectorXd to_vector() const;
  static NetworkParams from_vector(const Eigen::VectorXd& v);
  bool all_finite() const;
};

/// Glorot-uniform weights, zero biases. Deterministic per seed.
NetworkParams init_network(std::uint64_t seed);

/// Network output on a normalised feature vector (>= 0).
double forward(const NetworkParams& net, const FeatureVector& x);
/// Overload for callers holding a dynamic vector; throws PreconditionError unless size 8.
double forward(const NetworkParams& net, const Eigen::VectorXd& x);

/// d forward / d params.
NetworkParams output_gradient(const NetworkParams& net, const FeatureVector& x, double* out = nullptr);

/// Maximum over all 425 parameters of |g_bp - g_fd| / max(|g_bp|, |g_fd|, floor),
/// with g_fd a central difference of step 1e-6 evaluated in extended precision.
double gradient_check(const NetworkParams& net, const FeatureVector& x, double floor = 1e-8);

/// Upper bound on the Lipschitz constant of forward() w.r.t. its input
/// (product of layer spectral norms; tanh and softplus are 1-Lipschitz).
double lipschitz_bound(const NetworkParams& net);

nlohmann::json network_to_json(const NetworkParams& net);
NetworkParams network_from_json(const nlohmann::json& j);

// --- labels ------------------------------------------------------------------------

inline constexpr double kGradeMax = 10.0;

/// (10 - grade) / 10. Throws PreconditionError outside [0, 10].
double grade_to_cost(double grade);

/// Per-feature-class penalty weights of the synthetic labeller.
struct SynthWeights {
  double overshoot = 3.0;
  double undershoot = 3.0;
  double settling = 2.0;
  double steady_error = 6.0;
};

/// clamp(10 - sum_k w_k (f_k + f_k^2), 0, 10) on raw features.
double synth_label(const FeatureVector& f, const SynthWeights& w = {});

// --- dataset -------------------------------------------------------------------------

enum class Source { kHuman, kSynthetic };
std::string to_string(Source s);
Source source_from_string(const std::string& s);

struct LabeledSample {
  std::string trajectory_id;
  FeatureVector features{};
  double grade = 0.0;
  Source source = Source::kSynthetic;
};

/// n samples labelled by synth_label on features of random template responses
/// (window 8 s, 80 samples). Ids are "s-000000", "s-000001", ...
std::vector<LabeledSample> synthetic_dataset(int n, std::uint64_t seed, const SynthWeights& w = {});

enum class Split : int { kTrain = 0, kDev = 1, kTest = 2 };

struct Dataset {
  std::vector<LabeledSample> samples;
  std::vector<Split> split;
  NormStats stats = NormStats::identity();

  std::vector<std::size_t> indices(Split s) const;
  std::size_t count(Split s) const { return indices(s).size(); }
};

/// Stratified-by-source shuffle split; ratios must sum to 1. Stats are fitted
/// on the train split only.
Dataset split_dataset(std::vector<LabeledSample> samples, const std::array<double, 3>& ratios = {0.70, 0.15, 0.15},
                      std::uint64_t seed = 0);

/// JSON-lines schema: one header record, then one record per sample.
nlohmann::json dataset_header();
nlohmann::json sample_to_json(const LabeledSample& s);
LabeledSample sample_from_json(const nlohmann::json& j);
void save_dataset(const std::vector<LabeledSample>& samples, const std::string& path);
std::vector<LabeledSample> load_dataset(const std::string& path);

// --- training --------------------------------------------------------------------------

struct TrainConfig {
  double learning_rate = 0.02;
  double momentum = 0.9;
  int batch_size = 32;
  int epochs = 400;
  int patience = 60;  // epochs without dev improvement before stopping
  std::uint64_t seed = 1;

  void validate() const;
};

struct Metrics {
  double mse = 0.0;
  double r2 = 0.0;
};

struct TrainResult {
  NetworkParams net;
  NormStats stats;
  Metrics train, dev, test;
  int best_epoch = 0;
  int epochs_run = 0;
};

/// Regression metrics of the network on the given rows (normalised with `stats`).
Metrics evaluate_metrics(const NetworkParams& net, const NormStats& stats, const std::vector<LabeledSample>& rows);

/// Mini-batch momentum SGD on the MSE against grade_to_cost(grade). Returns the
/// best-dev checkpoint. Throws TrainingError (with epoch) on divergence.
TrainResult train(const Dataset& data, const TrainConfig& cfg);

/// Trained network plus the normalisation it expects: the learned cost.
struct Surrogate {
  NetworkParams net = NetworkParams::zeros();
  NormStats stats = NormStats::identity();

  /// Cost of a raw feature vector.
  double cost(const FeatureVector& raw) const;
};

nlohmann::json surrogate_to_json(const Surrogate& s);
Surrogate surrogate_from_json(const nlohmann::json& j);
void save_surrogate(const Surrogate& s, const std::string& path);
Surrogate load_surrogate(const std::string& path);

}  // namespace mpctune::surrogate
