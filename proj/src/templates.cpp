#include <cmath>

#include "mpctune/errors.hpp"
#include "mpctune/trajectory_features.hpp"

namespace mpctune::features {

namespace {

// Unit-step and impulse responses of wn^2 / (s^2 + 2 zeta wn s + wn^2).
void second_order(double zeta, double wn, double t, double& step, double& impulse) {
  if (zeta < 1.0) {
    const double root = std::sqrt(1.0 - zeta * zeta);
    const double wd = wn * root;
    const double decay = std::exp(-zeta * wn * t);
    step = 1.0 - decay * (std::cos(wd * t) + zeta / root * std::sin(wd * t));
    impulse = wn / root * decay * std::sin(wd * t);
  } else if (zeta == 1.0) {
    const double decay = std::exp(-wn * t);
    step = 1.0 - decay * (1.0 + wn * t);
    impulse = wn * wn * t * decay;
  } else {
    const double root = std::sqrt(zeta * zeta - 1.0);
    const double p1 = wn * (zeta - root), p2 = wn * (zeta + root);
    const double e1 = std::exp(-p1 * t), e2 = std::exp(-p2 * t);
    step = 1.0 - (p2 * e1 - p1 * e2) / (p2 - p1);
    impulse = p1 * p2 * (e1 - e2) / (p2 - p1);
  }
}

}  // namespace

double template_shape(const TemplateParams& p, double t) {
  if (!(p.wn > 0.0) || !(p.zeta > 0.0) || p.zero < 0.0)
    throw PreconditionError("template needs wn > 0, zeta > 0 and zero >= 0");
  double step = 0.0, impulse = 0.0;
  second_order(p.zeta, p.wn, t, step, impulse);
  return (1.0 + p.gain_error) * (step - p.zero * impulse);
}

TemplateParams sample_template(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  TemplateParams p;
  p.zeta = 0.15 + 1.35 * u01(rng);
  p.wn = std::pow(10.0, u01(rng));  // 1 .. 10 rad/s
  p.zero = u01(rng) < 0.3 ? 0.4 * u01(rng) : 0.0;
  p.gain_error = u01(rng) < 0.5 ? 0.1 * (u01(rng) - 0.5) : 0.0;
  p.noise_std = 0.002 * u01(rng);
  return p;
}

StepResponse template_response(const std::array<TemplateParams, kNumOutputs>& params,
                               const std::array<StepReference, kNumOutputs>& ref, double window, int n,
                               unsigned long long noise_seed) {
  if (n < 1 || !(window > 0.0)) throw PreconditionError("template response needs n >= 1 and window > 0");
  StepResponse resp;
  resp.window = window;
  resp.ref = ref;
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> nd;
  for (int k = 1; k <= n; ++k) resp.time.push_back(k * window / n);
  for (int o = 0; o < kNumOutputs; ++o) {
    const double dr = ref[o].final - ref[o].start;
    for (double t : resp.time) {
      const double noise = params[o].noise_std > 0.0 ? params[o].noise_std * nd(rng) : 0.0;
      resp.y[o].push_back(ref[o].start + dr * (template_shape(params[o], t) + noise));
    }
  }
  return resp;
}

}  // namespace mpctune::features
