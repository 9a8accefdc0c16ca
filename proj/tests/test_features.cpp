#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "feature_oracles.hpp"
#include "mpctune/errors.hpp"
#include "mpctune/trajectory_features.hpp"

using namespace mpctune;
using namespace mpctune::features;
using mpctune::testing::random_response;
using mpctune::testing::sample_response;
using mpctune::testing::transform;

namespace {

ToleranceConfig exact_band() {
  ToleranceConfig tol;
  tol.noise_fraction = 0.0;
  return tol;
}

}  // namespace

TEST_CASE("first-order oracle") {
  const StepResponse r = sample_response([](double t) { return testing::first_order(t, 1.0); }, 10.0, 1000);
  const FeatureVector f = extract_features(r, exact_band());
  for (int o = 0; o < 2; ++o) {
    CHECK(f[feature_index(o, kOvershoot)] <= 1e-4);
    CHECK(f[feature_index(o, kUndershoot)] == 0.0);
    CHECK(std::abs(f[feature_index(o, kSettling)] - std::log(100.0) / 10.0) <= 2e-3);
    CHECK(f[feature_index(o, kSteadyError)] <= 1e-3);
  }
  // With the default noise allowance the band widens and settling comes earlier.
  const FeatureVector g = extract_features(r);
  CHECK(g[kSettling] < f[kSettling]);
}

TEST_CASE("second-order overshoot oracle") {
  for (double zeta : {0.3, 0.5, 0.7}) {
    const StepResponse r = sample_response([&](double t) { return testing::second_order(t, zeta, 1.0); }, 60.0, 6000);
    const FeatureVector f = extract_features(r);
    CHECK(std::abs(f[kOvershoot] - testing::analytic_overshoot(zeta)) <= 2e-3);
    CHECK(f[kUndershoot] == 0.0);
  }
  CHECK(std::abs(testing::analytic_overshoot(0.5) - 0.1630) <= 1e-4);
}

TEST_CASE("constant response at the final reference") {
  const StepResponse r = sample_response([](double) { return 1.0; }, 8.0, 80);
  const FeatureVector f = extract_features(r);
  for (int o = 0; o < 2; ++o) {
    CHECK(f[feature_index(o, kOvershoot)] == 0.0);
    CHECK(f[feature_index(o, kUndershoot)] == 0.0);
    CHECK(f[feature_index(o, kSettling)] == doctest::Approx(r.time.front() / r.window));
    CHECK(f[feature_index(o, kSteadyError)] == 0.0);
  }
}

TEST_CASE("never settling response is capped at the window") {
  const StepResponse r = sample_response([](double t) { return 1.0 + 0.3 * std::sin(3.0 * t); }, 8.0, 80);
  CHECK(extract_features(r)[kSettling] == 1.0);
}

TEST_CASE("falling steps are mirrored") {
  const auto shape = [](double t) { return testing::second_order(t, 0.4, 2.0); };
  const FeatureVector up = extract_features(sample_response(shape, 8.0, 400, 1.0, 2.0));
  const FeatureVector down = extract_features(sample_response(shape, 8.0, 400, 2.0, 1.0));
  for (int i = 0; i < kFeatureDim; ++i) CHECK(down[i] == doctest::Approx(up[i]).epsilon(1e-12));
}

TEST_CASE("undershoot of a non-minimum-phase response") {
  const auto shape = [](double t) { return 1.0 - std::exp(-t) - 2.0 * t * std::exp(-2.0 * t) * 0.9; };
  const StepResponse r = sample_response(shape, 10.0, 2000);
  double mn = 0.0;
  for (double v : r.y[0]) mn = std::min(mn, v);
  CHECK(extract_features(r)[kUndershoot] == doctest::Approx(-mn).epsilon(1e-12));
}

TEST_CASE("short excursions are ignored") {
  // Settled at t = 1, then a 1-sample blip (1.25% of the window) at t = 6.
  StepResponse r = sample_response([](double t) { return t < 1.0 ? t : 1.0; }, 8.0, 80);
  r.y[0][59] += 0.2;
  const FeatureVector f = extract_features(r);
  CHECK(f[kSettling] == doctest::Approx(1.0 / 8.0).epsilon(0.02));
  // A 3-sample excursion (3.75% of the window) counts.
  r.y[0][60] += 0.2;
  r.y[0][61] += 0.2;
  CHECK(extract_features(r)[kSettling] > 6.0 / 8.0);
}

TEST_CASE("preconditions") {
  StepResponse r = sample_response([](double t) { return 1.0 - std::exp(-t); }, 8.0, 80);
  StepResponse flat = r;
  flat.ref[1] = {0.5, 0.5};
  CHECK_THROWS_AS(extract_features(flat), DegenerateStepError);
  StepResponse uneven = r;
  uneven.time[10] += 0.03;
  CHECK_THROWS_AS(extract_features(uneven), PreconditionError);
  StepResponse shortr = sample_response([](double t) { return t; }, 8.0, 20);
  CHECK_THROWS_AS(extract_features(shortr), PreconditionError);
  StepResponse nan = r;
  nan.y[0][3] = std::nan("");
  CHECK_THROWS_AS(extract_features(nan), PreconditionError);
}

TEST_CASE("translation and scale invariance on random responses") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> shift(-50.0, 50.0), scale(0.01, 100.0);
  for (int k = 0; k < 2000; ++k) {
    const StepResponse r = random_response(rng);
    const FeatureVector f = extract_features(r);
    const FeatureVector ft = extract_features(transform(r, 1.0, shift(rng)));
    const FeatureVector fs = extract_features(transform(r, scale(rng), 0.0));
    for (int i = 0; i < kFeatureDim; ++i) {
      CHECK(std::abs(ft[i] - f[i]) <= 1e-9);
      CHECK(std::abs(fs[i] - f[i]) <= 1e-9);
      CHECK(std::isfinite(f[i]));
    }
    for (int o = 0; o < 2; ++o) {
      CHECK(f[feature_index(o, kOvershoot)] >= 0.0);
      CHECK(f[feature_index(o, kUndershoot)] >= 0.0);
      CHECK(f[feature_index(o, kSettling)] > 0.0);
      CHECK(f[feature_index(o, kSettling)] <= 1.0);
    }
  }
}

TEST_CASE("noise below half the allowance barely moves the settling time") {
  std::mt19937_64 rng(8);
  const ToleranceConfig tol;
  std::uniform_real_distribution<double> noise(-0.49 * tol.noise_fraction, 0.49 * tol.noise_fraction);
  const auto shape = [](double t) { return testing::second_order(t, 0.6, 2.0); };
  const StepResponse clean = sample_response(shape, 8.0, 400);
  const FeatureVector f0 = extract_features(clean, tol);
  for (int trial = 0; trial < 200; ++trial) {
    StepResponse noisy = clean;
    for (std::size_t i = 0; i < noisy.size(); ++i)
      if (noisy.time[i] > 4.0) noisy.y[0][i] += noise(rng);
    CHECK(std::abs(extract_features(noisy, tol)[kSettling] - f0[kSettling]) < 0.02);
  }
}

TEST_CASE("grid refinement") {
  // Responses that settle well inside the window; the never-settled cap is a
  // discontinuity of the settling feature.
  for (double zeta : {0.5, 0.7, 0.9}) {
    const auto shape = [&](double t) { return testing::second_order(t, zeta, 1.5); };
    const StepResponse coarse = sample_response(shape, 8.0, 200);
    const StepResponse fine = sample_response(shape, 8.0, 400);
    const FeatureVector a = extract_features(coarse), b = extract_features(fine);
    const double dt_rel = (8.0 / 200) / 8.0;
    for (int i = 0; i < kFeatureDim; ++i) CHECK(std::abs(a[i] - b[i]) < dt_rel);
  }
}

TEST_CASE("normalisation") {
  FeatureVector fv{0.1, 0.0, 0.4, 0.02, 0.3, 0.05, 0.9, 0.0};
  const NormStats id = NormStats::identity();
  CHECK(normalize_features(fv, id) == fv);
  std::vector<FeatureVector> rows{fv, {0.2, 0.1, 0.5, 0.01, 0.1, 0.0, 0.7, 0.2}, {0.0, 0.3, 0.2, 0.05, 0.2, 0.1, 0.8, 0.1}};
  const NormStats st = NormStats::fit(rows);
  const FeatureVector z = normalize_features(st.mean, st);
  for (double v : z) CHECK(v == 0.0);
  const FeatureVector back = denormalize_features(normalize_features(fv, st), st);
  for (int i = 0; i < kFeatureDim; ++i) CHECK(std::abs(back[i] - fv[i]) <= 1e-12);
  NormStats bad = st;
  bad.scale[3] = 0.0;
  CHECK_THROWS_AS(normalize_features(fv, bad), PreconditionError);
}

TEST_CASE("csv and sidecar round trip") {
  std::mt19937_64 rng(2);
  StepResponse r = random_response(rng);
  r.id = "t-0001";
  const auto dir = std::filesystem::temp_directory_path();
  const auto csv = (dir / "mpctune_resp.csv").string(), side = (dir / "mpctune_resp.json").string();
  save_step_response(r, csv, side);
  const StepResponse back = load_step_response(csv, side);
  CHECK(back.id == r.id);
  CHECK(back.time == r.time);
  CHECK(back.y[0] == r.y[0]);
  CHECK(back.y[1] == r.y[1]);
  CHECK(back.ref[1].final == r.ref[1].final);
  CHECK(back.window == r.window);
  CHECK(extract_features(back) == extract_features(r));
  std::filesystem::remove(csv);
  std::filesystem::remove(side);
}
