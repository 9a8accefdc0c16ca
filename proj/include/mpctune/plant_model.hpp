#pragma once

// Synthetic four-state air-path digital twin.
//
// The twin is affine-in-theta around a designed equilibrium:
//
//   dx/dt = A(th) dx + B(th) du + nl(dx, du),   dx = x - x_eq(th), du = u - u_eq(th)
//   A(th) = A0 + w A_w + w_fuel A_f   (B, x_eq, u_eq likewise)
//
// where nl() collects the second/third-order couplings
//   nl_0 = c0 dp_in dthr, nl_1 = c1 dp_ex dvgt,
//   nl_2 = c2 (tanh(dw_comp) - dw_comp), nl_3 = c3 df_egr degr.
// nl() and its Jacobian vanish at the designed equilibrium, so the regional
// linearisations recover A(th), B(th) exactly. Outputs are y = (p_in, f_egr).

#include <array>
#include <functional>
#include <utility>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace mpctune::plant {

inline constexpr int kStateDim = 4;
inline constexpr int kInputDim = 3;
inline constexpr int kOutputDim = 2;
inline constexpr int kParamDim = 2;

using StateVec = Eigen::Matrix<double, kStateDim, 1>;
using InputVec = Eigen::Matrix<double, kInputDim, 1>;
using OutputVec = Eigen::Matrix<double, kOutputDim, 1>;
using MatA = Eigen::Matrix<double, kStateDim, kStateDim>;
using MatB = Eigen::Matrix<double, kStateDim, kInputDim>;
using MatC = Eigen::Matrix<double, kOutputDim, kStateDim>;
using MatD = Eigen::Matrix<double, kOutputDim, kInputDim>;

// State layout.
enum StateIndex : int { kPin = 0, kPex = 1, kWcomp = 2, kFegr = 3 };
// Input layout.
enum InputIndex : int { kThrottle = 0, kEgrValve = 1, kVgt = 2 };

/// Engine operating point (normalised speed, normalised volumetric fuelling).
struct OperatingPoint {
  double speed = 0.0;
  double fuel = 0.0;

  friend bool operator==(const OperatingPoint&, const OperatingPoint&) = default;
};

struct Box4 {
  StateVec lo;
  StateVec hi;
};

struct Box3 {
  InputVec lo;
  InputVec hi;
};

struct PlantConfig {
  MatA a0, a_speed, a_fuel;
  MatB b0, b_speed, b_fuel;
  StateVec x_eq0, x_eq_speed, x_eq_fuel;
  InputVec u_eq0, u_eq_speed, u_eq_fuel;
  std::array<double, 4> nonlinear{};

  Box4 state_box;
  Box3 input_box;
  // Theta rectangle.
  OperatingPoint theta_lo{0.0, 0.0};
  OperatingPoint theta_hi{1.0, 1.0};

  // Grid: evenly spaced cell centres of the theta rectangle.
  int speed_points = 3;
  int fuel_points = 4;

  double sample_time = 0.1;  // Ts [s]
  int rk4_substeps = 5;      // integration steps per controller sample
  double hysteresis = 0.0;   // region switching hysteresis, in grid-spacing units

  double output_noise_std = 0.0;
  unsigned long long noise_seed = 0;

  /// Documented default twin (see README for the parameter table).
  static PlantConfig defaults();
  /// Same as defaults() with all nonlinear couplings switched off.
  static PlantConfig linear_defaults();

  MatA a_at(const OperatingPoint& th) const;
  MatB b_at(const OperatingPoint& th) const;
  StateVec x_eq_at(const OperatingPoint& th) const;
  InputVec u_eq_at(const OperatingPoint& th) const;

  /// Throws DomainError if the config is unusable.
  void validate() const;
};

/// One linearised, discretised region of the switched model.
struct RegionModel {
  int index = 0;  // 1-based
  OperatingPoint theta;
  MatA a;
  MatB b;
  MatC c;
  MatD d;
  MatA a_cont;
  MatB b_cont;
  StateVec x_star;
  InputVec u_star;
  OutputVec r_star;
  double sample_time = 0.0;
};

struct ContinuousLinearization {
  MatA a;
  MatB b;
  MatC c;
  MatD d;
};

struct SteadyState {
  StateVec x;
  InputVec u;
  double residual = 0.0;
  int iterations = 0;
};

// --- twin ------------------------------------------------------------------

void check_domain(const StateVec& x, const InputVec& u, const OperatingPoint& th,
                  const PlantConfig& cfg);

/// dx/dt of the twin. Throws DomainError naming the violated bound.
StateVec evaluate_dynamics(const StateVec& x, const InputVec& u, const OperatingPoint& th,
                           const PlantConfig& cfg);

/// Unchecked right-hand side (no domain test); used by the Jacobian code.
StateVec dynamics_unchecked(const StateVec& x, const InputVec& u, const OperatingPoint& th,
                            const PlantConfig& cfg);

OutputVec evaluate_output(const StateVec& x, const InputVec& u, const OperatingPoint& th);

/// One classical RK4 step of the twin.
StateVec integrate_step(const StateVec& x, const InputVec& u, const OperatingPoint& th,
                        double dt, const PlantConfig& cfg);

/// Generic RK4 step for x' = f(x), used by the analytic tests.
template <class Vec, class F>
Vec rk4_step(const Vec& x, double dt, F&& f) {
  const Vec k1 = f(x);
  const Vec k2 = f(Vec(x + 0.5 * dt * k1));
  const Vec k3 = f(Vec(x + 0.5 * dt * k2));
  const Vec k4 = f(Vec(x + dt * k3));
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// --- linear models -----------------------------------------------------------

/// Central-difference derivative of a scalar function with step 1e-6 (1 + |x|).
double central_difference(double x, const std::function<double(double)>& f);

/// Jacobians of f and h at the given point (central differences).
ContinuousLinearization linearize_at(const StateVec& x, const InputVec& u,
                                     const OperatingPoint& th, const PlantConfig& cfg);

/// Linearisation at the equilibrium for the region's default reference.
ContinuousLinearization linearize(const OperatingPoint& th_sharp, const PlantConfig& cfg);

/// Zero-order-hold discretisation by truncated series of exp([A B; 0 0] Ts).
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> discretize(const Eigen::MatrixXd& a_c,
                                                       const Eigen::MatrixXd& b_c, double ts);

/// Default reference of an operating point: the output at its designed equilibrium.
OutputVec default_reference(const OperatingPoint& th, const PlantConfig& cfg);

/// Solves f(x,u,th)=0, h(x,u,th)=r by damped minimum-norm Newton from the
/// designed equilibrium. Throws NoSolutionError on failure.
SteadyState solve_steady_state(const OperatingPoint& th, const OutputVec& r,
                               const PlantConfig& cfg);

// --- grid ----------------------------------------------------------------------

std::vector<OperatingPoint> grid_points(const PlantConfig& cfg);

RegionModel build_region(int index, const OperatingPoint& th, const PlantConfig& cfg);

/// Builds every region of the configured grid. Failures abort with the region index.
std::vector<RegionModel> build_region_grid(const PlantConfig& cfg);

/// True when a stabilising solution of the DARE with Q = I, R = I exists.
bool is_stabilizable(const MatA& a, const MatB& b);

/// Nearest grid point in grid-spacing-scaled distance; ties go to the lower index.
int select_region(const OperatingPoint& th, const std::vector<RegionModel>& grid,
                  const PlantConfig& cfg);

/// Stateful selector applying the configured hysteresis band.
class RegionSelector {
 public:
  RegionSelector(const std::vector<RegionModel>& grid, const PlantConfig& cfg);
  int update(const OperatingPoint& th);
  int current() const { return current_; }

 private:
  const std::vector<RegionModel>* grid_;
  const PlantConfig* cfg_;
  int current_ = 0;
};

// --- io ------------------------------------------------------------------------

PlantConfig load_plant_config(const std::string& path);
PlantConfig plant_config_from_json_text(const std::string& text);
std::string plant_config_to_json_text(const PlantConfig& cfg);
void save_region_grid(const std::vector<RegionModel>& grid, const std::string& path);
std::string region_grid_to_json_text(const std::vector<RegionModel>& grid);

}  // namespace mpctune::plant
