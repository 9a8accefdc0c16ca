#include <doctest.h>

#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "mpctune/gain_tuner.hpp"
#include "mpctune/linalg.hpp"
#include "tuner_oracles.hpp"

using namespace mpctune;
using namespace mpctune::tuner;
using namespace mpctune::testing;

namespace {

const plant::PlantConfig& plant_cfg() {
  static const plant::PlantConfig c = plant::PlantConfig::defaults();
  return c;
}

const std::vector<plant::RegionModel>& grid() {
  static const auto g = plant::build_region_grid(plant_cfg());
  return g;
}

surrogate::Surrogate constant_surrogate(double c) {
  surrogate::Surrogate s;
  s.net.b3 = std::log(std::expm1(c));  // softplus^{-1}(c)
  return s;
}

}  // namespace

TEST_CASE("random orthogonal matrices") {
  std::mt19937_64 rng(1);
  for (int n : {3, 4}) {
    for (int k = 0; k < 20; ++k) {
      const Eigen::MatrixXd q = random_orthogonal(n, rng);
      CHECK((q.transpose() * q - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
  int plus = 0;
  for (int k = 0; k < 10000; ++k) {
    const Eigen::MatrixXd q = random_orthogonal(1, rng);
    CHECK(std::abs(std::abs(q(0, 0)) - 1.0) <= 1e-15);
    plus += q(0, 0) > 0.0;
  }
  CHECK(std::abs(plus / 10000.0 - 0.5) <= 0.05);

  // Haar on O(4): first column uniform on the sphere. Each coordinate has mean 0
  // and variance 1/4; the first coordinate squared has mean 1/4. det = +-1 with
  // equal probability.
  const int draws = 10000;
  Eigen::Vector4d mean = Eigen::Vector4d::Zero();
  double sq = 0.0;
  int det_plus = 0;
  for (int k = 0; k < draws; ++k) {
    const Eigen::MatrixXd q = random_orthogonal(4, rng);
    mean += q.col(0);
    sq += q(0, 0) * q(0, 0);
    det_plus += q.determinant() > 0.0;
  }
  mean /= draws;
  const double sigma = std::sqrt(0.25 / draws);
  CHECK(mean.cwiseAbs().maxCoeff() <= 3.0 * sigma);
  CHECK(std::abs(sq / draws - 0.25) <= 0.01);
  CHECK(std::abs(det_plus / static_cast<double>(draws) - 0.5) <= 0.02);
  CHECK_THROWS_AS(random_orthogonal(0, rng), PreconditionError);
}

TEST_CASE("random symmetric directions") {
  std::mt19937_64 rng(2);
  double eig_sum = 0.0, eig_sq = 0.0;
  const int draws = 10000;
  for (int k = 0; k < draws; ++k) {
    const Eigen::MatrixXd m = random_symmetric_direction(4, rng);
    REQUIRE((m - m.transpose()).cwiseAbs().maxCoeff() == 0.0);
    const Eigen::Vector4d ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues();
    eig_sum += ev.sum();
    eig_sq += ev.squaredNorm();
  }
  CHECK(std::abs(eig_sum / (4.0 * draws)) <= 0.05);
  CHECK(std::abs(eig_sq / (4.0 * draws) - 1.0) <= 0.05);

  std::mt19937_64 a(9), b(9);
  CHECK(random_symmetric_direction(3, a) == random_symmetric_direction(3, b));
  const DirectionTriple t = DirectionTriple::random(4, 3, a);
  CHECK(t.p.rows() == 4);
  CHECK(t.r.rows() == 3);
}

TEST_CASE("psd projection examples") {
  Eigen::MatrixXd s(2, 2);
  s << 1, 2, 2, 1;
  Eigen::MatrixXd expect(2, 2);
  expect << 1.5, 1.5, 1.5, 1.5;
  CHECK((project_psd(s) - expect).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(project_psd(-Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() <= 1e-15);

  std::mt19937_64 rng(3);
  for (int k = 0; k < 200; ++k) {
    const Eigen::MatrixXd a = random_symmetric(4, rng);
    const Eigen::MatrixXd psd = a * a.transpose();
    CHECK((project_psd(psd) - psd).cwiseAbs().maxCoeff() <= 1e-12);
    const Eigen::MatrixXd p1 = project_psd(a);
    CHECK(linalg::sym_eigmin(p1) >= 0.0);
    CHECK((p1 - p1.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((project_psd(p1) - p1).cwiseAbs().maxCoeff() <= 1e-12);
  }
  Eigen::MatrixXd asym(2, 2);
  asym << 1, 2, 0, 1;
  CHECK_THROWS_AS(project_psd(asym), PreconditionError);
  CHECK_THROWS_AS(project_psd(Eigen::MatrixXd(2, 3)), PreconditionError);
}

TEST_CASE("psd projection is Frobenius-nearest on 2x2") {
  std::mt19937_64 rng(4);
  for (int k = 0; k < 300; ++k) {
    const Eigen::MatrixXd s = random_symmetric(2, rng, 2.0);
    const Eigen::Matrix2d oracle = nearest_psd_2x2(s);
    const Eigen::MatrixXd p = project_psd(s);
    CHECK((p - oracle).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK((s - p).norm() <= (s - oracle).norm() + 1e-12);
  }
}

TEST_CASE("pd projection") {
  Eigen::MatrixXd s = Eigen::Vector2d(0.5, -3.0).asDiagonal();
  const Eigen::MatrixXd p = project_pd(s, 1e-15);
  CHECK(p(0, 0) == 0.5);
  CHECK(p(1, 1) >= 1e-15);
  CHECK(p(1, 1) <= 1e-14);
  CHECK(p(0, 1) == 0.0);

  std::mt19937_64 rng(5);
  for (int k = 0; k < 500; ++k) {
    const Eigen::MatrixXd a = random_symmetric(3, rng, 3.0);
    for (double d : {1e-15, 1e-6, 0.5}) CHECK(linalg::sym_eigmin(project_pd(a, d)) >= d);
    const Eigen::MatrixXd pd = a * a.transpose() + 0.1 * Eigen::MatrixXd::Identity(3, 3);
    CHECK((project_pd(pd, 1e-15) - pd).cwiseAbs().maxCoeff() <= 1e-12);
  }
  CHECK_THROWS_AS(project_pd(s, 0.0), PreconditionError);
  CHECK_THROWS_AS(project_pd(s, -1.0), PreconditionError);
}

TEST_CASE("random oracle") {
  std::mt19937_64 rng(6);
  mpc::GainSet k = mpc::GainSet::identity(4, 3);
  const DirectionTriple m = DirectionTriple::random(4, 3, rng);

  const CostFunction constant = [](const mpc::GainSet&) { return Evaluation{0.25, false, {}}; };
  const OracleResult c = random_oracle(k, m, 1e-9, constant);
  CHECK(c.delta == 0.0);
  CHECK(c.g.frobenius_norm() == 0.0);

  // f = trace(P) is linear: delta = trace(M_P).
  k.p.setZero();
  const CostFunction tr = [](const mpc::GainSet& g) { return Evaluation{g.p.trace(), false, {}}; };
  const OracleResult o = random_oracle(k, m, 1e-9, tr);
  const Eigen::MatrixXd expect = m.p.trace() * m.p;
  CHECK((o.g.p - expect).norm() <= 1e-6 * expect.norm());
  CHECK((o.g.q - m.p.trace() * m.q).norm() <= 1e-6 * expect.norm());

  const CostFunction neg = [](const mpc::GainSet& g) { return Evaluation{-g.p.trace(), false, {}}; };
  CHECK(random_oracle(k, m, 1e-9, neg).delta == doctest::Approx(-o.delta).epsilon(1e-6));

  // Known base cost is used instead of re-evaluating.
  int calls = 0;
  const CostFunction counting = [&](const mpc::GainSet& g) {
    ++calls;
    return Evaluation{g.p.trace(), false, {}};
  };
  random_oracle(k, m, 1e-9, counting, 0.0);
  CHECK(calls == 1);

  const CostFunction faulty = [](const mpc::GainSet& g) {
    return g.p.isZero(0.0) ? Evaluation{0.0, false, {}} : Evaluation{kFaultCost, true, "fault"};
  };
  CHECK_THROWS_AS(random_oracle(k, m, 1e-9, faulty), OracleError);
  CHECK_THROWS_AS(random_oracle(k, m, 0.0, tr), PreconditionError);
}

TEST_CASE("oracle average aligns with the gradient") {
  const Quadratic f = make_quadratic(7);
  mpc::GainSet k = mpc::GainSet::identity(4, 3);
  k.p *= 3.0;
  const CostFunction eval = [&](const mpc::GainSet& g) { return f(g); };
  // Gradient of the quadratic by central differences on each packed entry.
  const Eigen::VectorXd v = k.to_vector();
  Eigen::VectorXd fd(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    Eigen::VectorXd a = v, b = v;
    a(i) += 1e-5;
    b(i) -= 1e-5;
    fd(i) = (f(mpc::GainSet::from_vector(a, 4, 3, 10)).cost - f(mpc::GainSet::from_vector(b, 4, 3, 10)).cost) / 2e-5;
  }
  std::mt19937_64 rng(8);
  DirectionTriple sum = DirectionTriple::zeros(4, 3);
  for (int n = 0; n < 1000; ++n) {
    const OracleResult o = random_oracle(k, DirectionTriple::random(4, 3, rng), 1e-9, eval);
    sum.p += o.g.p;
    sum.q += o.g.q;
    sum.r += o.g.r;
  }
  mpc::GainSet avg;
  avg.p = sum.p;
  avg.q = sum.q;
  avg.r = sum.r;
  // Off-diagonal packed entries of a symmetric gradient count twice.
  Eigen::VectorXd g = avg.to_vector();
  const Eigen::VectorXd diag_mask = mpc::GainSet::identity(4, 3).to_vector();
  for (Eigen::Index i = 0; i < g.size(); ++i)
    if (diag_mask(i) == 0.0) g(i) *= 2.0;
  const double cosine = g.dot(fd) / (g.norm() * fd.norm());
  CHECK(cosine > 0.5);
}

TEST_CASE("tuner config validation") {
  TunerConfig c;
  CHECK_NOTHROW(c.validate(26));
  CHECK(c.step(1) == doctest::Approx(1e-6 / std::sqrt(2.0)));
  CHECK(c.step(50) == doctest::Approx(1e-6 / std::sqrt(51.0)));
  TunerConfig bad = c;
  bad.mu = 0.0;
  CHECK_THROWS_AS(bad.validate(26), PreconditionError);
  bad = c;
  bad.pd_floor = 0.0;
  CHECK_THROWS_AS(bad.validate(26), PreconditionError);
  bad = c;
  bad.iterations = -1;
  CHECK_THROWS_AS(bad.validate(26), PreconditionError);
  bad = c;
  bad.metric = Eigen::MatrixXd::Identity(25, 25);
  CHECK_THROWS_AS(bad.validate(26), PreconditionError);
  bad.metric = -Eigen::MatrixXd::Identity(26, 26);
  CHECK_THROWS_AS(bad.validate(26), PreconditionError);
}

TEST_CASE("zero iterations return the promising candidate") {
  const Quadratic f = make_quadratic(1);
  TunerConfig cfg;
  cfg.iterations = 0;
  cfg.seed = 3;
  const TuneResult r = tune(4, 3, f, cfg);
  REQUIRE(r.trace.entries.size() == 1);
  std::mt19937_64 rng(cfg.seed);
  const auto batch = initial_batch(4, 3, cfg, rng);
  std::size_t argmin = 0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    CHECK(r.trace.batch_costs[b] == f(batch[b]).cost);
    if (f(batch[b]).cost < f(batch[argmin]).cost) argmin = b;
  }
  CHECK(r.trace.promising_index == static_cast<int>(argmin));
  CHECK(r.best.to_vector() == batch[argmin].to_vector());
  CHECK(r.best_cost == f(batch[argmin]).cost);
}

TEST_CASE("quadratic objective: descent, monotone trace, cone iterates") {
  int improved = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Quadratic f = make_quadratic(100 + s);
    TunerConfig cfg;
    cfg.seed = s;
    const TuneResult r = tune(4, 3, f, cfg);
    CHECK(r.trace.entries.size() == 51);
    CHECK(r.trace.best_monotone());
    improved += r.best_cost < r.trace.initial_cost();
    for (const TraceEntry& e : r.trace.entries) {
      CHECK(linalg::sym_eigmin(e.gains.p) >= 0.0);
      CHECK(linalg::sym_eigmin(e.gains.q) >= 0.0);
      CHECK(linalg::sym_eigmin(e.gains.r) >= 1e-15);
      CHECK(e.candidate_cost == f(e.gains).cost);
    }
    CHECK(r.best_cost == f(r.best).cost);
  }
  CHECK(improved >= 18);
}

TEST_CASE("large steps still respect the cones") {
  // Targets outside the cones pull iterates onto the boundary.
  Quadratic f = make_quadratic(2);
  f.target.p = -f.target.p;
  f.target.r = -f.target.r;
  TunerConfig cfg;
  cfg.step0 = 0.05;
  cfg.mu = 1e-6;
  cfg.iterations = 200;
  const TuneResult r = tune(4, 3, f, cfg);
  for (const TraceEntry& e : r.trace.entries) {
    CHECK(linalg::sym_eigmin(e.gains.p) >= 0.0);
    CHECK(linalg::sym_eigmin(e.gains.r) >= cfg.pd_floor);
  }
  CHECK(r.trace.best_monotone());
  CHECK(r.best_cost < 0.9 * r.trace.initial_cost());
}

TEST_CASE("tuning is deterministic per seed") {
  const Quadratic f = make_quadratic(3);
  TunerConfig cfg;
  cfg.seed = 42;
  const TuneResult a = tune(4, 3, f, cfg), b = tune(4, 3, f, cfg);
  CHECK(trace_to_json(a.trace) == trace_to_json(b.trace));
  cfg.seed = 43;
  CHECK(trace_to_json(tune(4, 3, f, cfg).trace) != trace_to_json(a.trace));
}

TEST_CASE("metric B rescales the step") {
  const Quadratic f = make_quadratic(4);
  TunerConfig cfg;
  cfg.step0 = 0.01;
  cfg.mu = 1e-6;
  cfg.iterations = 5;
  cfg.init_shift = 6.0;  // keeps every iterate interior
  TunerConfig half = cfg;
  half.step0 = 0.005;
  TunerConfig metric = cfg;
  metric.metric = 2.0 * Eigen::MatrixXd::Identity(26, 26);
  const TuneResult a = tune(4, 3, f, half), b = tune(4, 3, f, metric);
  for (std::size_t i = 0; i < a.trace.entries.size(); ++i)
    CHECK((a.trace.entries[i].gains.to_vector() - b.trace.entries[i].gains.to_vector()).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("faults") {
  const CostFunction always = [](const mpc::GainSet&) { return Evaluation{kFaultCost, true, "x"}; };
  CHECK_THROWS_AS(tune(4, 3, always, TunerConfig{}), TuningError);

  // Faults after the batch are recorded and never become the best point.
  int calls = 0;
  TunerConfig cfg;
  cfg.batch_size = 2;
  cfg.iterations = 6;
  const CostFunction flaky = [&](const mpc::GainSet& g) {
    ++calls;
    if (calls > 2 && calls % 3 == 0) return Evaluation{kFaultCost, true, "injected"};
    return Evaluation{0.5 + 1e-3 * g.p.trace(), false, {}};
  };
  const TuneResult r = tune(4, 3, flaky, cfg);
  CHECK(r.trace.best_monotone());
  CHECK(r.best_cost < kFaultCost);
}

TEST_CASE("trace csv") {
  const TuneResult r = tune(4, 3, make_quadratic(5), TunerConfig{});
  const std::string csv = trace_to_csv(r.trace);
  CHECK(csv.rfind("iteration,candidate_cost,best_cost,fault,oracle_norm\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 52);
}

TEST_CASE("step experiment layout") {
  CHECK(neighbour_region(1, 12) == 2);
  CHECK(neighbour_region(11, 12) == 12);
  CHECK(neighbour_region(12, 12) == 11);
  CHECK_THROWS_AS(neighbour_region(13, 12), PreconditionError);
  CHECK_THROWS_AS(neighbour_region(1, 1), PreconditionError);

  for (int i = 1; i <= 12; ++i) {
    const StepExperiment e = make_step_experiment(grid(), i, plant_cfg());
    CHECK(e.samples == 80);
    CHECK(e.r_start == grid()[static_cast<std::size_t>(i - 1)].r_star);
    CHECK(e.r_final == grid()[static_cast<std::size_t>(neighbour_region(i, 12) - 1)].r_star);
    // Target is a fixed point of the twin at the region's operating point.
    const plant::StateVec dx = plant::evaluate_dynamics(e.x_target, e.u_target, e.region.theta, plant_cfg());
    CHECK(dx.cwiseAbs().maxCoeff() <= 1e-9);
  }
  StepExperimentConfig odd;
  odd.window = 8.05;
  CHECK_THROWS_AS(make_step_experiment(grid(), 1, plant_cfg(), odd), PreconditionError);
}

TEST_CASE("closed-loop step test") {
  const StepExperiment e = make_step_experiment(grid(), 5, plant_cfg());
  const mpc::GainSet k = mpc::GainSet::identity(4, 3);
  const features::StepResponse a = simulate_step(k, e), b = simulate_step(k, e);
  REQUIRE(a.size() == 80);
  CHECK(a.time.front() == doctest::Approx(0.1));
  CHECK(a.time.back() == doctest::Approx(8.0));
  CHECK(a.y == b.y);
  // The loop settles at the new reference.
  for (int o = 0; o < 2; ++o) CHECK(std::abs(a.y[o].back() - e.r_final(o)) <= 1e-3);

  // Holding the start reference keeps the loop at its equilibrium.
  StepExperimentConfig hold;
  hold.reference = e.r_start;
  const StepExperiment h = make_step_experiment(grid(), 5, plant_cfg(), hold);
  const features::StepResponse c = simulate_step(k, h);
  for (int o = 0; o < 2; ++o)
    for (double v : c.y[o]) CHECK(std::abs(v - e.r_start(o)) <= 1e-6);
}

TEST_CASE("evaluate_candidate") {
  const StepExperiment e = make_step_experiment(grid(), 3, plant_cfg());
  std::mt19937_64 rng(11);
  TunerConfig cfg;
  for (const mpc::GainSet& g : initial_batch(4, 3, cfg, rng)) {
    const Evaluation ev = evaluate_candidate(g, constant_surrogate(0.3), e);
    CHECK_FALSE(ev.fault);
    CHECK(ev.cost == doctest::Approx(0.3).epsilon(1e-12));
  }

  // Forced infeasible QP: empty throttle range.
  StepExperiment broken = e;
  broken.plant.input_box.lo(plant::kThrottle) = broken.plant.input_box.hi(plant::kThrottle) + 0.1;
  const Evaluation f = evaluate_candidate(mpc::GainSet::identity(4, 3), constant_surrogate(0.3), broken);
  CHECK(f.fault);
  CHECK(f.cost == kFaultCost);
  CHECK_FALSE(f.message.empty());

  // Indefinite gains are a fault, not an exception.
  mpc::GainSet bad = mpc::GainSet::identity(4, 3);
  bad.q(0, 0) = -1.0;
  CHECK(evaluate_candidate(bad, constant_surrogate(0.3), e).fault);
}

TEST_CASE("heavier input weights slow the loop and raise the learned cost") {
  const auto ds = surrogate::split_dataset(surrogate::synthetic_dataset(2000, 3), {0.7, 0.15, 0.15}, 3);
  const surrogate::TrainResult tr = surrogate::train(ds, {});
  const surrogate::Surrogate sur{tr.net, tr.stats};
  const StepExperiment e = make_step_experiment(grid(), 6, plant_cfg());
  double prev_cost = -1.0, prev_settle = -1.0, first_settle = -1.0;
  for (double alpha : {1.0, 1e2, 1e4, 1e6}) {
    mpc::GainSet g = mpc::GainSet::identity(4, 3);
    g.r *= alpha;
    const features::FeatureVector f = features::extract_features(simulate_step(g, e));
    const double settle = std::max(f[features::feature_index(0, features::kSettling)],
                                   f[features::feature_index(1, features::kSettling)]);
    const Evaluation ev = evaluate_candidate(g, sur, e);
    CHECK_FALSE(ev.fault);
    CHECK(settle >= prev_settle);
    CHECK(ev.cost >= prev_cost);
    prev_cost = ev.cost;
    prev_settle = settle;
    if (first_settle < 0.0) first_settle = settle;
  }
  // The steady-state input target acts as feedforward, so even a frozen
  // feedback term settles (at open-loop speed) before the cap.
  CHECK(prev_settle > first_settle);
}

TEST_CASE("tune_region on the closed loop") {
  const StepExperiment e = make_step_experiment(grid(), 2, plant_cfg());
  const auto ds = surrogate::split_dataset(surrogate::synthetic_dataset(1000, 4), {0.7, 0.15, 0.15}, 4);
  const surrogate::TrainResult tr = surrogate::train(ds, {});
  const surrogate::Surrogate sur{tr.net, tr.stats};
  TunerConfig cfg;
  cfg.iterations = 10;
  cfg.seed = 5;
  const TuneResult a = tune_region(e, sur, cfg), b = tune_region(e, sur, cfg);
  CHECK(trace_to_json(a.trace) == trace_to_json(b.trace));
  CHECK(a.trace.best_monotone());
  CHECK(a.best_cost <= a.trace.initial_cost());
  CHECK(evaluate_candidate(a.best, sur, e).cost == a.best_cost);
}
