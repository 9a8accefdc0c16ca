#include "mpctune/gain_set.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "mpctune/errors.hpp"
#include "mpctune/linalg.hpp"

namespace mpctune::mpc {

namespace {

int tri(int n) { return n * (n + 1) / 2; }

void check_symmetric(const Eigen::MatrixXd& m, const char* name) {
  if (m.rows() != m.cols()) throw PreconditionError(std::string(name) + " is not square");
  if (!m.allFinite()) throw PreconditionError(std::string(name) + " has non-finite entries");
  if (m != m.transpose()) throw PreconditionError(std::string(name) + " is not symmetric");
}

}  // namespace

GainSet GainSet::identity(int nx, int nu, int horizon) {
  return GainSet{Eigen::MatrixXd::Identity(nx, nx), Eigen::MatrixXd::Identity(nx, nx),
                 Eigen::MatrixXd::Identity(nu, nu), horizon};
}

int GainSet::parameter_count() const {
  return tri(static_cast<int>(p.rows())) + tri(static_cast<int>(q.rows())) +
         tri(static_cast<int>(r.rows()));
}

void GainSet::validate(double r_floor) const {
  check_symmetric(p, "P");
  check_symmetric(q, "Q");
  check_symmetric(r, "R");
  if (p.rows() != q.rows()) throw PreconditionError("P and Q dimensions differ");
  if (horizon < 1) throw PreconditionError("horizon must be >= 1");
  if (linalg::sym_eigmin(p) < 0.0) throw PreconditionError("P is not positive semidefinite");
  if (linalg::sym_eigmin(q) < 0.0) throw PreconditionError("Q is not positive semidefinite");
  if (!(linalg::sym_eigmin(r) >= r_floor)) throw PreconditionError("R is not positive definite");
}

Eigen::VectorXd GainSet::to_vector() const {
  Eigen::VectorXd v(parameter_count());
  Eigen::Index k = 0;
  for (const Eigen::MatrixXd* m : {&p, &q, &r}) {
    const Eigen::VectorXd packed = pack_lower(*m);
    v.segment(k, packed.size()) = packed;
    k += packed.size();
  }
  return v;
}

GainSet GainSet::from_vector(const Eigen::VectorXd& v, int nx, int nu, int horizon) {
  if (v.size() != 2 * tri(nx) + tri(nu)) throw PreconditionError("gain vector has wrong length");
  GainSet g;
  g.horizon = horizon;
  g.p = unpack_lower(v.segment(0, tri(nx)), nx);
  g.q = unpack_lower(v.segment(tri(nx), tri(nx)), nx);
  g.r = unpack_lower(v.segment(2 * tri(nx), tri(nu)), nu);
  return g;
}

GainSet GainSet::scaled(double alpha) const {
  return GainSet{alpha * p, alpha * q, alpha * r, horizon};
}

Eigen::VectorXd pack_lower(const Eigen::MatrixXd& s) {
  const int n = static_cast<int>(s.rows());
  Eigen::VectorXd v(tri(n));
  Eigen::Index k = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) v(k++) = s(i, j);
  return v;
}

Eigen::MatrixXd unpack_lower(const Eigen::VectorXd& packed, int n) {
  if (packed.size() != tri(n)) throw PreconditionError("packed triangle has wrong length");
  Eigen::MatrixXd s(n, n);
  Eigen::Index k = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) {
      s(i, j) = packed(k);
      s(j, i) = packed(k);
      ++k;
    }
  return s;
}

nlohmann::json gains_to_json(const GainSet& g) {
  auto arr = [](const Eigen::MatrixXd& m) {
    const Eigen::VectorXd v = pack_lower(m);
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  return nlohmann::json{{"state_dim", g.state_dim()},
                        {"input_dim", g.input_dim()},
                        {"horizon", g.horizon},
                        {"P", arr(g.p)},
                        {"Q", arr(g.q)},
                        {"R", arr(g.r)}};
}

GainSet gains_from_json(const nlohmann::json& j) {
  try {
    const int nx = j.at("state_dim").get<int>();
    const int nu = j.at("input_dim").get<int>();
    auto mat = [&](const char* key, int n) {
      const auto vals = j.at(key).get<std::vector<double>>();
      return unpack_lower(Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size())), n);
    };
    GainSet g{mat("P", nx), mat("Q", nx), mat("R", nu), j.at("horizon").get<int>()};
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("gain file: ") + e.what());
  }
}

void save_gains(const GainSet& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << gains_to_json(g).dump(2) << '\n';
}

GainSet load_gains(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open gain file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return gains_from_json(nlohmann::json::parse(ss.str()));
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("gain file: ") + e.what());
  }
}

}  // namespace mpctune::mpc
