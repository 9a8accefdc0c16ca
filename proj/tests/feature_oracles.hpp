#pragma once

// Closed-form step responses used as oracles by the feature tests and the
// acceptance binary.

#include <cmath>
#include <functional>
#include <random>

#include "mpctune/trajectory_features.hpp"

namespace mpctune::testing {

/// Unit-step response of 1/(tau s + 1).
inline double first_order(double t, double tau) { return 1.0 - std::exp(-t / tau); }

/// Unit-step response of wn^2 / (s^2 + 2 zeta wn s + wn^2), 0 < zeta < 1.
inline double second_order(double t, double zeta, double wn) {
  const double wd = wn * std::sqrt(1.0 - zeta * zeta);
  const double phi = std::acos(zeta);
  return 1.0 - std::exp(-zeta * wn * t) * std::sin(wd * t + phi) / std::sqrt(1.0 - zeta * zeta);
}

inline double analytic_overshoot(double zeta) {
  return std::exp(-M_PI * zeta / std::sqrt(1.0 - zeta * zeta));
}

/// Samples t = dt, 2 dt, ..., window for both outputs from the same shape,
/// mapped onto the step r_start -> r_final.
inline features::StepResponse sample_response(const std::function<double(double)>& shape, double window, int n,
                                              double r_start = 0.0, double r_final = 1.0) {
  features::StepResponse resp;
  resp.window = window;
  const double dt = window / n;
  for (int k = 1; k <= n; ++k) {
    const double t = k * dt;
    resp.time.push_back(t);
    const double y = r_start + (r_final - r_start) * shape(t);
    resp.y[0].push_back(y);
    resp.y[1].push_back(y);
  }
  resp.ref[0] = {r_start, r_final};
  resp.ref[1] = {r_start, r_final};
  return resp;
}

// Random underdamped-ish response with independent shapes per output.
inline features::StepResponse random_response(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> zeta(0.15, 1.5), wn(0.5, 4.0), ref(-3.0, 3.0), noise(-0.01, 0.01);
  features::StepResponse r;
  r.window = 8.0;
  const int n = 80;
  for (int k = 1; k <= n; ++k) r.time.push_back(k * r.window / n);
  for (int o = 0; o < features::kNumOutputs; ++o) {
    double a = ref(rng), b = ref(rng);
    if (std::abs(a - b) < 0.05) b = a + 0.5;
    r.ref[o] = {a, b};
    const double z = zeta(rng), w = wn(rng);
    for (double t : r.time) {
      double s;
      if (z < 1.0) {
        s = second_order(t, z, w);
      } else {
        s = 1.0 - std::exp(-w * t / z);
      }
      r.y[o].push_back(a + (b - a) * (s + noise(rng)));
    }
  }
  return r;
}

inline features::StepResponse transform(const features::StepResponse& r, double alpha, double shift) {
  features::StepResponse out = r;
  for (int o = 0; o < features::kNumOutputs; ++o) {
    for (auto& v : out.y[o]) v = alpha * v + shift;
    out.ref[o] = {alpha * r.ref[o].start + shift, alpha * r.ref[o].final + shift};
  }
  return out;
}

}  // namespace mpctune::testing
