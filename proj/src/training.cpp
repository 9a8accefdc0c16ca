#include <cmath>
#include <numeric>
#include <random>

#include "mpctune/errors.hpp"
#include "mpctune/surrogate_cost.hpp"

namespace mpctune::surrogate {

namespace {

struct Row {
  FeatureVector x;
  double y;
};

std::vector<Row> rows_of(const Dataset& data, Split s) {
  std::vector<Row> rows;
  for (std::size_t i : data.indices(s))
    rows.push_back({features::normalize_features(data.samples[i].features, data.stats),
                    grade_to_cost(data.samples[i].grade)});
  return rows;
}

Metrics metrics_of(const NetworkParams& net, const std::vector<Row>& rows) {
  Metrics m;
  if (rows.empty()) return m;
  double mean = 0.0;
  for (const Row& r : rows) mean += r.y;
  mean /= static_cast<double>(rows.size());
  double sse = 0.0, sst = 0.0;
  for (const Row& r : rows) {
    const double e = forward(net, r.x) - r.y;
    sse += e * e;
    sst += (r.y - mean) * (r.y - mean);
  }
  m.mse = sse / static_cast<double>(rows.size());
  m.r2 = sst > 0.0 ? 1.0 - sse / sst : (sse == 0.0 ? 1.0 : 0.0);
  return m;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !(momentum >= 0.0 && momentum < 1.0) || batch_size < 1 || epochs < 1 ||
      patience < 1)
    throw PreconditionError("invalid training configuration");
}

Metrics evaluate_metrics(const NetworkParams& net, const NormStats& stats, const std::vector<LabeledSample>& rows) {
  std::vector<Row> r;
  for (const auto& s : rows) r.push_back({features::normalize_features(s.features, stats), grade_to_cost(s.grade)});
  return metrics_of(net, r);
}

TrainResult train(const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  const std::vector<Row> tr = rows_of(data, Split::kTrain);
  const std::vector<Row> dev = rows_of(data, Split::kDev);
  const std::vector<Row> te = rows_of(data, Split::kTest);
  if (tr.empty()) throw PreconditionError("training split is empty");
  const std::vector<Row>& monitor = dev.empty() ? tr : dev;

  std::mt19937_64 rng(cfg.seed);
  NetworkParams net = init_network(rng());
  Eigen::VectorXd theta = net.to_vector();
  Eigen::VectorXd velocity = Eigen::VectorXd::Zero(kParamCount);

  TrainResult best;
  best.net = net;
  best.stats = data.stats;
  double best_dev = metrics_of(net, monitor).mse;
  int since_best = 0;

  std::vector<std::size_t> order(tr.size());
  std::iota(order.begin(), order.end(), 0);
  int epoch = 0;
  for (epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(kParamCount);
      for (std::size_t k = start; k < stop; ++k) {
        const Row& r = tr[order[k]];
        double out = 0.0;
        const NetworkParams g = output_gradient(net, r.x, &out);
        grad += (2.0 * (out - r.y)) * g.to_vector();
      }
      grad /= static_cast<double>(stop - start);
      velocity = cfg.momentum * velocity - cfg.learning_rate * grad;
      theta += velocity;
      net = NetworkParams::from_vector(theta);
    }
    const double dev_mse = metrics_of(net, monitor).mse;
    if (!std::isfinite(dev_mse) || !net.all_finite())
      throw TrainingError("training diverged at epoch " + std::to_string(epoch), epoch);
    if (dev_mse < best_dev) {
      best_dev = dev_mse;
      best.net = net;
      best.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  best.epochs_run = std::min(epoch, cfg.epochs);
  best.train = metrics_of(best.net, tr);
  best.dev = metrics_of(best.net, dev);
  best.test = metrics_of(best.net, te);
  return best;
}

}  // namespace mpctune::surrogate
