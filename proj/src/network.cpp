#include <cmath>
#include <fstream>
#include <random>

#include <Eigen/Dense>

#include "mpctune/errors.hpp"
#include "mpctune/json_eigen.hpp"
#include "mpctune/surrogate_cost.hpp"

namespace mpctune::surrogate {

namespace {

template <class T>
T softplus(T a) {
  // log(1 + e^a) without overflow.
  using std::abs, std::exp, std::log1p;
  return (a > T(0) ? a : T(0)) + log1p(exp(-abs(a)));
}

double sigmoid(double a) {
  return a >= 0.0 ? 1.0 / (1.0 + std::exp(-a)) : std::exp(a) / (1.0 + std::exp(a));
}

// Generic-precision forward pass over the flat parameter vector, used by the
// finite-difference reference.
template <class T>
T forward_flat(const std::vector<T>& p, const FeatureVector& x) {
  std::size_t k = 0;
  const std::size_t w1 = k;
  k += kH1 * kIn;
  const std::size_t b1 = k;
  k += kH1;
  const std::size_t w2 = k;
  k += kH2 * kH1;
  const std::size_t b2 = k;
  k += kH2;
  const std::size_t w3 = k;
  k += kH2;
  const std::size_t b3 = k;

  std::array<T, kH1> h1;
  for (int i = 0; i < kH1; ++i) {
    T a = p[b1 + i];
    for (int j = 0; j < kIn; ++j) a += p[w1 + j * kH1 + i] * T(x[j]);  // column-major
    h1[i] = std::tanh(a);
  }
  std::array<T, kH2> h2;
  for (int i = 0; i < kH2; ++i) {
    T a = p[b2 + i];
    for (int j = 0; j < kH1; ++j) a += p[w2 + j * kH2 + i] * h1[j];
    h2[i] = std::tanh(a);
  }
  T a = p[b3];
  for (int j = 0; j < kH2; ++j) a += p[w3 + j] * h2[j];
  return softplus(a);
}

Eigen::Matrix<double, kIn, 1> as_vec(const FeatureVector& x) {
  return Eigen::Map<const Eigen::Matrix<double, kIn, 1>>(x.data());
}

}  // namespace

NetworkParams NetworkParams::zeros() {
  NetworkParams p;
  p.w1.setZero();
  p.b1.setZero();
  p.w2.setZero();
  p.b2.setZero();
  p.w3.setZero();
  p.b3 = 0.0;
  return p;
}

Eigen::VectorXd NetworkParams::to_vector() const {
  Eigen::VectorXd v(kParamCount);
  Eigen::Index k = 0;
  auto put = [&](const auto& m) {
    v.segment(k, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
    k += m.size();
  };
  put(w1);
  put(b1);
  put(w2);
  put(b2);
  put(w3);
  v(k) = b3;
  return v;
}

NetworkParams NetworkParams::from_vector(const Eigen::VectorXd& v) {
  if (v.size() != kParamCount) throw PreconditionError("network parameter vector must have 425 entries");
  NetworkParams p;
  Eigen::Index k = 0;
  auto get = [&](auto& m) {
    Eigen::Map<Eigen::VectorXd>(m.data(), m.size()) = v.segment(k, m.size());
    k += m.size();
  };
  get(p.w1);
  get(p.b1);
  get(p.w2);
  get(p.b2);
  get(p.w3);
  p.b3 = v(k);
  return p;
}

bool NetworkParams::all_finite() const {
  return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite() && w3.allFinite() &&
         std::isfinite(b3);
}

NetworkParams init_network(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  NetworkParams p = NetworkParams::zeros();
  auto fill = [&](auto& m, int fan_in, int fan_out) {
    const double lim = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-lim, lim);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng);
  };
  fill(p.w1, kIn, kH1);
  fill(p.w2, kH1, kH2);
  fill(p.w3, kH2, 1);
  return p;
}

double forward(const NetworkParams& net, const FeatureVector& x) {
  const Eigen::Matrix<double, kH1, 1> h1 = (net.w1 * as_vec(x) + net.b1).array().tanh();
  const Eigen::Matrix<double, kH2, 1> h2 = (net.w2 * h1 + net.b2).array().tanh();
  return softplus(net.w3.dot(h2) + net.b3);
}

double forward(const NetworkParams& net, const Eigen::VectorXd& x) {
  if (x.size() != kIn) throw PreconditionError("network input must have 8 features");
  FeatureVector f;
  for (int i = 0; i < kIn; ++i) f[i] = x(i);
  return forward(net, f);
}

NetworkParams output_gradient(const NetworkParams& net, const FeatureVector& x, double* out) {
  const Eigen::Matrix<double, kIn, 1> xin = as_vec(x);
  const Eigen::Matrix<double, kH1, 1> h1 = (net.w1 * xin + net.b1).array().tanh();
  const Eigen::Matrix<double, kH2, 1> h2 = (net.w2 * h1 + net.b2).array().tanh();
  const double a3 = net.w3.dot(h2) + net.b3;
  if (out) *out = softplus(a3);

  NetworkParams g;
  const double d3 = sigmoid(a3);
  g.b3 = d3;
  g.w3 = d3 * h2.transpose();
  const Eigen::Matrix<double, kH2, 1> d2 =
      (d3 * net.w3.transpose()).cwiseProduct((1.0 - h2.array().square()).matrix());
  g.b2 = d2;
  g.w2 = d2 * h1.transpose();
  const Eigen::Matrix<double, kH1, 1> d1 =
      (net.w2.transpose() * d2).cwiseProduct((1.0 - h1.array().square()).matrix());
  g.b1 = d1;
  g.w1 = d1 * xin.transpose();
  return g;
}

double gradient_check(const NetworkParams& net, const FeatureVector& x, double floor) {
  const Eigen::VectorXd g_bp = output_gradient(net, x).to_vector();
  const Eigen::VectorXd theta = net.to_vector();
  std::vector<long double> p(theta.data(), theta.data() + theta.size());
  constexpr long double h = 1e-6L;
  double worst = 0.0;
  for (int i = 0; i < kParamCount; ++i) {
    const long double keep = p[static_cast<std::size_t>(i)];
    p[static_cast<std::size_t>(i)] = keep + h;
    const long double fp = forward_flat(p, x);
    p[static_cast<std::size_t>(i)] = keep - h;
    const long double fm = forward_flat(p, x);
    p[static_cast<std::size_t>(i)] = keep;
    const double g_fd = static_cast<double>((fp - fm) / (2.0L * h));
    const double denom = std::max({std::abs(g_bp(i)), std::abs(g_fd), floor});
    worst = std::max(worst, std::abs(g_bp(i) - g_fd) / denom);
  }
  return worst;
}

double lipschitz_bound(const NetworkParams& net) {
  auto spec = [](const auto& m) {
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd{Eigen::MatrixXd(m)};
    return svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
  };
  return spec(net.w1) * spec(net.w2) * net.w3.norm();
}

nlohmann::json network_to_json(const NetworkParams& net) {
  return nlohmann::json{{"layers", {kIn, kH1, kH2, 1}},
                        {"activation", {{"hidden", "tanh"}, {"output", "softplus"}}},
                        {"W1", jsonio::matrix_to_json(net.w1)},
                        {"b1", jsonio::vector_to_json(net.b1)},
                        {"W2", jsonio::matrix_to_json(net.w2)},
                        {"b2", jsonio::vector_to_json(net.b2)},
                        {"W3", jsonio::matrix_to_json(net.w3)},
                        {"b3", net.b3}};
}

NetworkParams network_from_json(const nlohmann::json& j) {
  try {
    if (j.at("layers") != nlohmann::json{kIn, kH1, kH2, 1})
      throw PreconditionError("network layers must be [8, 24, 8, 1]");
    for (const char* key : {"W1", "b1", "W2", "b2", "W3", "b3"})
      if (!j.contains(key)) throw PreconditionError(std::string("network json: missing ") + key);
    NetworkParams p;
    jsonio::read_fixed(j, "W1", p.w1);
    jsonio::read_fixed(j, "b1", p.b1);
    jsonio::read_fixed(j, "W2", p.w2);
    jsonio::read_fixed(j, "b2", p.b2);
    jsonio::read_fixed(j, "W3", p.w3);
    p.b3 = j.at("b3").get<double>();
    if (!p.all_finite()) throw PreconditionError("network parameters are not finite");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw PreconditionError(std::string("network json: ") + e.what());
  }
}

double Surrogate::cost(const FeatureVector& raw) const {
  return forward(net, features::normalize_features(raw, stats));
}

nlohmann::json surrogate_to_json(const Surrogate& s) {
  nlohmann::json norm{{"mean", s.stats.mean}, {"scale", s.stats.scale}};
  return nlohmann::json{{"network", network_to_json(s.net)}, {"normalization", norm}};
}

Surrogate surrogate_from_json(const nlohmann::json& j) {
  Surrogate s;
  s.net = network_from_json(j.at("network"));
  try {
    s.stats.mean = j.at("normalization").at("mean").get<FeatureVector>();
    s.stats.scale = j.at("normalization").at("scale").get<FeatureVector>();
  } catch (const nlohmann::json::exception& e) {
    throw PreconditionError(std::string("surrogate normalization: ") + e.what());
  }
  return s;
}

void save_surrogate(const Surrogate& s, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path);
  os << surrogate_to_json(s).dump(1) << '\n';
}

Surrogate load_surrogate(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw PreconditionError(path + ": " + e.what());
  }
  return surrogate_from_json(j);
}

}  // namespace mpctune::surrogate
