#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <Eigen/Cholesky>

#include "mpctune/gain_tuner.hpp"

namespace mpctune::tuner {

namespace {

mpc::GainSet perturbed(const mpc::GainSet& k, const DirectionTriple& m, double scale) {
  mpc::GainSet out = k;
  out.p = k.p + scale * m.p;
  out.q = k.q + scale * m.q;
  out.r = k.r + scale * m.r;
  return out;
}

Evaluation checked(const CostFunction& eval, const mpc::GainSet& k) {
  Evaluation e = eval(k);
  if (!std::isfinite(e.cost)) {
    e.cost = kFaultCost;
    e.fault = true;
    e.message = "non-finite cost";
  }
  return e;
}

}  // namespace

OracleResult random_oracle(const mpc::GainSet& candidate, const DirectionTriple& dirs, double mu,
                           const CostFunction& eval, std::optional<double> base_cost) {
  if (!(mu > 0.0)) throw PreconditionError("oracle smoothing mu must be > 0");
  double f0 = 0.0;
  if (base_cost) {
    f0 = *base_cost;
  } else {
    const Evaluation e = eval(candidate);
    if (e.fault || !std::isfinite(e.cost)) throw OracleError("oracle base point failed: " + e.message);
    f0 = e.cost;
  }
  Evaluation e1;
  try {
    e1 = eval(perturbed(candidate, dirs, mu));
  } catch (const Error& ex) {
    throw OracleError(std::string("oracle perturbed point failed: ") + ex.what());
  }
  if (e1.fault || !std::isfinite(e1.cost)) throw OracleError("oracle perturbed point failed: " + e1.message);

  OracleResult out;
  out.perturbed_cost = e1.cost;
  out.delta = (e1.cost - f0) / mu;
  out.g = {out.delta * dirs.p, out.delta * dirs.q, out.delta * dirs.r};
  return out;
}

double TunerConfig::step(int j) const { return step0 / std::sqrt(static_cast<double>(j) + 1.0); }

void TunerConfig::validate(int parameter_count) const {
  if (!(mu > 0.0) || !std::isfinite(mu)) throw PreconditionError("tuner: mu must be > 0");
  if (!(pd_floor > 0.0) || !std::isfinite(pd_floor)) throw PreconditionError("tuner: pd floor must be > 0");
  if (!(step0 > 0.0) || !std::isfinite(step0)) throw PreconditionError("tuner: step0 must be > 0");
  if (iterations < 0) throw PreconditionError("tuner: iteration count must be >= 0");
  if (batch_size < 1) throw PreconditionError("tuner: batch size must be >= 1");
  if (max_redraws < 0) throw PreconditionError("tuner: max_redraws must be >= 0");
  if (horizon < 1) throw PreconditionError("tuner: horizon must be >= 1");
  if (!(init_scale > 0.0)) throw PreconditionError("tuner: init_scale must be > 0");
  if (metric.size() == 0) return;
  if (metric.rows() != parameter_count || metric.cols() != parameter_count)
    throw PreconditionError("tuner: metric B must be " + std::to_string(parameter_count) + " x " +
                            std::to_string(parameter_count));
  if (!metric.isApprox(metric.transpose(), 1e-12)) throw PreconditionError("tuner: metric B must be symmetric");
  if (Eigen::LLT<Eigen::MatrixXd>(metric).info() != Eigen::Success)
    throw PreconditionError("tuner: metric B must be positive definite");
}

bool TuneTrace::best_monotone() const {
  for (std::size_t i = 1; i < entries.size(); ++i)
    if (entries[i].best_cost > entries[i - 1].best_cost) return false;
  return true;
}

std::vector<mpc::GainSet> initial_batch(int nx, int nu, const TunerConfig& cfg, std::mt19937_64& rng) {
  std::vector<mpc::GainSet> batch;
  const Eigen::MatrixXd ix = Eigen::MatrixXd::Identity(nx, nx), iu = Eigen::MatrixXd::Identity(nu, nu);
  for (int b = 0; b < cfg.batch_size; ++b) {
    const DirectionTriple m = DirectionTriple::random(nx, nu, rng);
    mpc::GainSet k;
    k.horizon = cfg.horizon;
    k.p = project_psd(cfg.init_scale * (cfg.init_shift * ix + m.p));
    k.q = project_psd(cfg.init_scale * (cfg.init_shift * ix + m.q));
    k.r = project_pd(cfg.init_scale * (cfg.init_shift * iu + m.r), cfg.pd_floor);
    batch.push_back(std::move(k));
  }
  return batch;
}

TuneResult tune(int nx, int nu, const CostFunction& eval, const TunerConfig& cfg) {
  const int n_params = nx * (nx + 1) + nu * (nu + 1) / 2;
  cfg.validate(n_params);
  std::optional<Eigen::LLT<Eigen::MatrixXd>> metric;
  if (cfg.metric.size() != 0) metric.emplace(cfg.metric);

  std::mt19937_64 rng(cfg.seed);
  TuneResult res;
  TuneTrace& tr = res.trace;

  const std::vector<mpc::GainSet> batch = initial_batch(nx, nu, cfg, rng);
  int promising = -1;
  double promising_cost = std::numeric_limits<double>::infinity();
  for (int b = 0; b < cfg.batch_size; ++b) {
    const Evaluation e = checked(eval, batch[static_cast<std::size_t>(b)]);
    tr.batch_costs.push_back(e.cost);
    tr.batch_faults.push_back(e.fault);
    if (!e.fault && e.cost < promising_cost) {
      promising_cost = e.cost;
      promising = b;
    }
  }
  if (promising < 0) throw TuningError("every member of the initial batch faulted");
  tr.promising_index = promising;

  mpc::GainSet cur = batch[static_cast<std::size_t>(promising)];
  double cur_cost = promising_cost;
  bool cur_fault = false;
  res.best = cur;
  res.best_cost = cur_cost;
  tr.entries.push_back({0, cur_cost, cur_cost, false, 0.0, 0, cur});

  for (int j = 1; j <= cfg.iterations; ++j) {
    TraceEntry entry;
    entry.iteration = j;
    std::optional<OracleResult> oracle;
    for (int attempt = 0; attempt <= cfg.max_redraws && !oracle; ++attempt) {
      const DirectionTriple dirs = DirectionTriple::random(nx, nu, rng);
      try {
        oracle = random_oracle(cur, dirs, cfg.mu, eval, cur_fault ? std::nullopt : std::optional<double>(cur_cost));
      } catch (const OracleError&) {
        ++entry.redraws;
      }
    }
    if (oracle) {
      DirectionTriple g = oracle->g;
      if (metric) {
        mpc::GainSet packed;
        packed.p = g.p;
        packed.q = g.q;
        packed.r = g.r;
        const Eigen::VectorXd v = metric->solve(packed.to_vector());
        const mpc::GainSet back = mpc::GainSet::from_vector(v, nx, nu, cfg.horizon);
        g = {back.p, back.q, back.r};
      }
      entry.oracle_norm = g.frobenius_norm();
      const double h = cfg.step(j);
      cur.p = project_psd(cur.p - h * g.p);
      cur.q = project_psd(cur.q - h * g.q);
      cur.r = project_pd(cur.r - h * g.r, cfg.pd_floor);
      const Evaluation e = checked(eval, cur);
      cur_cost = e.cost;
      cur_fault = e.fault;
    }
    entry.candidate_cost = cur_cost;
    entry.fault = cur_fault;
    if (!cur_fault && cur_cost < res.best_cost) {
      res.best_cost = cur_cost;
      res.best = cur;
    }
    entry.best_cost = res.best_cost;
    entry.gains = cur;
    tr.entries.push_back(std::move(entry));
  }
  return res;
}

std::string trace_to_csv(const TuneTrace& trace) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  os << "iteration,candidate_cost,best_cost,fault,oracle_norm\n";
  for (const TraceEntry& e : trace.entries)
    os << e.iteration << ',' << e.candidate_cost << ',' << e.best_cost << ',' << (e.fault ? 1 : 0) << ','
       << e.oracle_norm << '\n';
  return os.str();
}

nlohmann::json trace_to_json(const TuneTrace& trace) {
  nlohmann::json entries = nlohmann::json::array();
  for (const TraceEntry& e : trace.entries)
    entries.push_back({{"iteration", e.iteration},
                       {"candidate_cost", e.candidate_cost},
                       {"best_cost", e.best_cost},
                       {"fault", e.fault},
                       {"oracle_norm", e.oracle_norm},
                       {"redraws", e.redraws},
                       {"gains", mpc::gains_to_json(e.gains)}});
  return {{"batch_costs", trace.batch_costs},
          {"batch_faults", trace.batch_faults},
          {"promising_index", trace.promising_index},
          {"entries", entries}};
}

void save_trace_csv(const TuneTrace& trace, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path);
  os << trace_to_csv(trace);
  if (!os) throw Error("write failed: " + path);
}

}  // namespace mpctune::tuner
