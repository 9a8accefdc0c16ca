#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "mpctune/errors.hpp"
#include "mpctune/linalg.hpp"
#include "mpctune/plant_model.hpp"

using namespace mpctune;
using namespace mpctune::plant;

namespace {

const PlantConfig& cfg() {
  static const PlantConfig c = PlantConfig::defaults();
  return c;
}

const std::vector<RegionModel>& grid() {
  static const std::vector<RegionModel> g = build_region_grid(cfg());
  return g;
}

// Independent ZOH oracle: exp of the augmented matrix by scaling and squaring
// of a Pade-free Taylor polynomial at small norm.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> zoh_oracle(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                                       double ts) {
  const Eigen::Index n = a.rows(), m = b.cols();
  Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + m, n + m);
  aug.topLeftCorner(n, n) = a * ts;
  aug.topRightCorner(n, m) = b * ts;
  const int s = 10;
  const Eigen::MatrixXd small = aug / std::pow(2.0, s);
  Eigen::MatrixXd e = Eigen::MatrixXd::Identity(n + m, n + m);
  Eigen::MatrixXd term = e;
  for (int k = 1; k < 20; ++k) {
    term = term * small / k;
    e += term;
  }
  for (int i = 0; i < s; ++i) e = e * e;
  return {e.topLeftCorner(n, n), e.topRightCorner(n, m)};
}

}  // namespace

TEST_CASE("equilibrium is a fixed point of the twin") {
  for (const auto& reg : grid()) {
    const StateVec xdot = evaluate_dynamics(reg.x_star, reg.u_star, reg.theta, cfg());
    CHECK(xdot.cwiseAbs().maxCoeff() <= 1e-10);
    const StateVec next = integrate_step(reg.x_star, reg.u_star, reg.theta, 0.1, cfg());
    CHECK((next - reg.x_star).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("perturbed equilibrium follows the linearisation to second order") {
  const auto& reg = grid()[4];
  for (double delta : {1e-3, 1e-4}) {
    StateVec x = reg.x_star;
    x(0) += delta;
    const StateVec xdot = evaluate_dynamics(x, reg.u_star, reg.theta, cfg());
    const StateVec lin = reg.a_cont.col(0) * delta;
    CHECK((xdot - lin).cwiseAbs().maxCoeff() <= 10.0 * delta * delta);
  }
}

TEST_CASE("domain errors name the violated bound") {
  const auto& reg = grid()[0];
  StateVec x = reg.x_star;
  x(kFegr) = 1.5;
  try {
    evaluate_dynamics(x, reg.u_star, reg.theta, cfg());
    FAIL("expected DomainError");
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("f_egr") != std::string::npos);
    CHECK(std::string(e.what()).find("upper") != std::string::npos);
  }
  InputVec u = reg.u_star;
  u(kVgt) = -0.1;
  CHECK_THROWS_AS(evaluate_dynamics(reg.x_star, u, reg.theta, cfg()), DomainError);
  CHECK_THROWS_AS(evaluate_dynamics(reg.x_star, reg.u_star, {2.0, 0.5}, cfg()), DomainError);
  CHECK_THROWS_AS(integrate_step(reg.x_star, reg.u_star, reg.theta, 0.0, cfg()), DomainError);
}

TEST_CASE("rk4 on x' = -x matches exp(-0.1)") {
  Eigen::Matrix<double, 1, 1> x;
  x << 1.0;
  const auto next = rk4_step(x, 0.1, [](const Eigen::Matrix<double, 1, 1>& s) {
    return Eigen::Matrix<double, 1, 1>(-s);
  });
  CHECK(std::abs(next(0) - 0.9048374) <= 1e-7);
}

TEST_CASE("central difference of x^2 at 3") {
  CHECK(std::abs(central_difference(3.0, [](double v) { return v * v; }) - 6.0) <= 1e-6);
}

TEST_CASE("linear twin linearises to its configured matrices") {
  const PlantConfig lin_cfg = PlantConfig::linear_defaults();
  const OperatingPoint th{0.5, 0.375};
  const ContinuousLinearization lin = linearize(th, lin_cfg);
  CHECK((lin.a - lin_cfg.a_at(th)).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK((lin.b - lin_cfg.b_at(th)).cwiseAbs().maxCoeff() <= 1e-6);
  MatC c_expected = MatC::Zero();
  c_expected(0, kPin) = 1.0;
  c_expected(1, kFegr) = 1.0;
  CHECK((lin.c - c_expected).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(lin.d.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("nonlinear twin linearisations reproduce the affine parts (relative 1e-5)") {
  for (const auto& reg : grid()) {
    const MatA a_ref = cfg().a_at(reg.theta);
    const MatB b_ref = cfg().b_at(reg.theta);
    CHECK((reg.a_cont - a_ref).cwiseAbs().maxCoeff() <= 1e-5 * a_ref.cwiseAbs().maxCoeff());
    CHECK((reg.b_cont - b_ref).cwiseAbs().maxCoeff() <= 1e-5 * b_ref.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("discretize") {
  SUBCASE("integrator") {
    const auto [a, b] = discretize(Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Identity(2, 2), 0.5);
    CHECK((a - Eigen::MatrixXd::Identity(2, 2)).norm() == 0.0);
    CHECK((b - 0.5 * Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-15);
  }
  SUBCASE("scalar decay") {
    const auto [a, b] = discretize(Eigen::MatrixXd::Constant(1, 1, -1.0), Eigen::MatrixXd::Ones(1, 1), 0.1);
    CHECK(std::abs(a(0, 0) - std::exp(-0.1)) <= 1e-12);
    CHECK(std::abs(b(0, 0) - (1.0 - std::exp(-0.1))) <= 1e-12);
  }
  SUBCASE("zero system") {
    const auto [a, b] = discretize(Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(2, 1), 0.3);
    CHECK(a == Eigen::MatrixXd::Identity(2, 2));
    CHECK(b == Eigen::MatrixXd::Zero(2, 1));
  }
  SUBCASE("semigroup and oracle on the region models") {
    for (const auto& reg : grid()) {
      const auto [a1, b1] = discretize(reg.a_cont, reg.b_cont, 0.1);
      const auto [a2, b2] = discretize(reg.a_cont, reg.b_cont, 0.2);
      CHECK((a2 - a1 * a1).cwiseAbs().maxCoeff() <= 1e-10);
      CHECK((b2 - (a1 * b1 + b1)).cwiseAbs().maxCoeff() <= 1e-10);
      const auto [ao, bo] = zoh_oracle(reg.a_cont, reg.b_cont, 0.1);
      CHECK((a1 - ao).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK((b1 - bo).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
  CHECK_THROWS_AS(discretize(Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Zero(1, 1), 0.0), DomainError);
  CHECK_THROWS_AS(discretize(Eigen::MatrixXd::Constant(1, 1, -200.0), Eigen::MatrixXd::Zero(1, 1), 1.0),
                  NumericError);
}

TEST_CASE("steady-state solve") {
  SUBCASE("default reference returns the designed equilibrium") {
    const OperatingPoint th{0.5, 0.625};
    const SteadyState ss = solve_steady_state(th, default_reference(th, cfg()), cfg());
    CHECK((ss.x - cfg().x_eq_at(th)).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((ss.u - cfg().u_eq_at(th)).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("linear twin matches the dense min-norm least-squares solve") {
    const PlantConfig lin_cfg = PlantConfig::linear_defaults();
    const OperatingPoint th{0.5, 0.375};
    const OutputVec r0 = default_reference(th, lin_cfg);
    const OutputVec r = r0 + OutputVec(0.05, -0.02);
    const SteadyState ss = solve_steady_state(th, r, lin_cfg);
    Eigen::MatrixXd m(6, 7);
    m << lin_cfg.a_at(th), lin_cfg.b_at(th), MatC::Zero(), MatD::Zero();
    m(4, kPin) = 1.0;
    m(5, kFegr) = 1.0;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(6);
    rhs.tail(2) = r - r0;
    // Min-norm perturbation via the normal equations of the wide system.
    const Eigen::VectorXd dz = m.transpose() * (m * m.transpose()).ldlt().solve(rhs);
    CHECK((ss.x - cfg().x_eq_at(th) - dz.head(4)).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((ss.u - cfg().u_eq_at(th) - dz.tail(3)).cwiseAbs().maxCoeff() <= 1e-8);
  }
  SUBCASE("residual contract on 100 random feasible references per region") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> du(-0.04, 0.04);
    for (const auto& reg : grid()) {
      for (int k = 0; k < 100; ++k) {
        const OutputVec r = reg.r_star + OutputVec(du(rng), 0.5 * du(rng));
        const SteadyState ss = solve_steady_state(reg.theta, r, cfg());
        const StateVec f = evaluate_dynamics(ss.x, ss.u, reg.theta, cfg());
        const OutputVec e = evaluate_output(ss.x, ss.u, reg.theta) - r;
        CHECK(std::max(f.cwiseAbs().maxCoeff(), e.cwiseAbs().maxCoeff()) <= 1e-8);
      }
    }
  }
  SUBCASE("unreachable reference") {
    // f_egr = 0.98 at low boost needs an EGR valve beyond its box.
    CHECK_THROWS_AS(solve_steady_state({0.5, 0.5}, OutputVec(0.55, 0.98), cfg()), NoSolutionError);
    CHECK_THROWS_AS(solve_steady_state({0.5, 0.5}, OutputVec(5.0, 0.3), cfg()), DomainError);
  }
}

TEST_CASE("region grid") {
  CHECK(grid().size() == 12);
  for (std::size_t k = 0; k < grid().size(); ++k) {
    const auto& reg = grid()[k];
    CHECK(reg.index == static_cast<int>(k) + 1);
    CHECK(is_stabilizable(reg.a, reg.b));
    Eigen::MatrixXd p;
    CHECK(linalg::solve_dare(reg.a, reg.b, Eigen::MatrixXd::Identity(4, 4), Eigen::MatrixXd::Identity(3, 3), p));
    const Eigen::MatrixXd k_gain = linalg::dare_gain(reg.a, reg.b, Eigen::MatrixXd::Identity(3, 3), p);
    CHECK(linalg::spectral_radius(reg.a - reg.b * k_gain) < 1.0);
  }
  PlantConfig one = cfg();
  one.speed_points = 1;
  one.fuel_points = 1;
  const auto g1 = build_region_grid(one);
  REQUIRE(g1.size() == 1);
  CHECK(g1[0].index == 1);
}

TEST_CASE("select_region") {
  CHECK(select_region(grid()[2].theta, grid(), cfg()) == 3);
  const OperatingPoint mid{grid()[0].theta.speed, 0.5 * (grid()[0].theta.fuel + grid()[1].theta.fuel)};
  CHECK(select_region(mid, grid(), cfg()) == 1);

  // Brute-force Voronoi oracle on a dense sweep.
  const double ds = 1.0 / cfg().speed_points, df = 1.0 / cfg().fuel_points;
  for (int i = 0; i <= 60; ++i) {
    for (int j = 0; j <= 60; ++j) {
      const OperatingPoint th{i / 60.0, j / 60.0};
      const int got = select_region(th, grid(), cfg());
      CHECK(select_region(grid()[static_cast<std::size_t>(got - 1)].theta, grid(), cfg()) == got);
      int best = 0;
      double best_d = 1e300;
      for (const auto& reg : grid()) {
        const double d = std::pow((th.speed - reg.theta.speed) / ds, 2) + std::pow((th.fuel - reg.theta.fuel) / df, 2);
        if (d < best_d - 1e-12) {
          best_d = d;
          best = reg.index;
        }
      }
      CHECK(got == best);
    }
  }
}

TEST_CASE("region selector hysteresis") {
  PlantConfig h = cfg();
  h.hysteresis = 0.2;
  RegionSelector sel(grid(), h);
  CHECK(sel.update(grid()[0].theta) == 1);
  const double boundary = 0.25;  // fuel boundary between regions 1 and 2
  CHECK(sel.update({grid()[0].theta.speed, boundary + 0.01}) == 1);
  CHECK(sel.update({grid()[0].theta.speed, boundary + 0.05}) == 2);
}

TEST_CASE("plant config json round trip") {
  const std::string text = plant_config_to_json_text(cfg());
  const PlantConfig back = plant_config_from_json_text(text);
  CHECK(back.a0 == cfg().a0);
  CHECK(back.b_fuel == cfg().b_fuel);
  CHECK(back.x_eq_fuel == cfg().x_eq_fuel);
  CHECK(back.nonlinear == cfg().nonlinear);
  CHECK(back.speed_points == 3);
  const PlantConfig partial = plant_config_from_json_text(R"({"speed_points": 1, "sample_time": 0.05})");
  CHECK(partial.speed_points == 1);
  CHECK(partial.sample_time == 0.05);
  CHECK(partial.a0 == cfg().a0);
}
