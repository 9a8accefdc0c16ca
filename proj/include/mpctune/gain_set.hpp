#pragma once

#include <string>

#include <Eigen/Core>
#include <json.hpp>

namespace mpctune::mpc {

/// MPC weights (P terminal, Q stage-state, R stage-input) and horizon.
/// For the air-path plant P, Q are 4x4 and R is 3x3, i.e. 10 + 10 + 6 = 26
/// independent entries once symmetry is imposed.
struct GainSet {
  Eigen::MatrixXd p;
  Eigen::MatrixXd q;
  Eigen::MatrixXd r;
  int horizon = 10;

  static GainSet identity(int nx, int nu, int horizon = 10);

  int state_dim() const { return static_cast<int>(q.rows()); }
  int input_dim() const { return static_cast<int>(r.rows()); }

  /// Number of independent entries of the symmetric triple.
  int parameter_count() const;

  /// Throws PreconditionError unless P, Q are symmetric PSD, R symmetric with
  /// eigmin(R) >= r_floor, dimensions agree and horizon >= 1.
  void validate(double r_floor = 1e-15) const;

  /// Stacks the packed lower triangles of P, Q, R (see pack_lower).
  Eigen::VectorXd to_vector() const;
  static GainSet from_vector(const Eigen::VectorXd& v, int nx, int nu, int horizon);

  GainSet scaled(double alpha) const;
};

/// Lower-triangular packing used by the JSON format: row-major over i >= j.
Eigen::VectorXd pack_lower(const Eigen::MatrixXd& s);
Eigen::MatrixXd unpack_lower(const Eigen::VectorXd& packed, int n);

nlohmann::json gains_to_json(const GainSet& g);
GainSet gains_from_json(const nlohmann::json& j);
void save_gains(const GainSet& g, const std::string& path);
GainSet load_gains(const std::string& path);

}  // namespace mpctune::mpc
