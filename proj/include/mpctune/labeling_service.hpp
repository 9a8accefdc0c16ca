#pragma once

// Human grading queue: candidate trajectories ordered by the disagreement of
// a bootstrap ensemble, labels appended to a JSON-lines dataset file, and an
// HTTP front end.

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "mpctune/errors.hpp"
#include "mpctune/surrogate_cost.hpp"
#include "mpctune/trajectory_features.hpp"

namespace httplib {
class Server;
}

namespace mpctune::labeling {

class ConflictError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

enum class ItemStatus { kPending, kLabeled, kSkipped };
std::string to_string(ItemStatus s);

struct QueueItem {
  std::string id;
  std::string response_path;  // where the trajectory came from, if a file
  features::StepResponse response;
  features::FeatureVector features{};
  double score = 0.0;
  ItemStatus status = ItemStatus::kPending;
  std::optional<double> grade;
  std::uint64_t order = 0;  // insertion order
};

/// Ensemble of surrogates; the acquisition score is the population variance of
/// the members' costs.
class AcquisitionModel {
 public:
  AcquisitionModel() = default;
  /// Throws PreconditionError for fewer than two members.
  explicit AcquisitionModel(std::vector<surrogate::Surrogate> members);

  /// K networks, each trained on a bootstrap resample of `rows`.
  static AcquisitionModel train_bootstrap(const std::vector<surrogate::LabeledSample>& rows, int k,
                                          std::uint64_t seed, const surrogate::TrainConfig& cfg);

  bool empty() const { return members_.empty(); }
  std::size_t size() const { return members_.size(); }
  /// 0 for an empty model.
  double score(const features::FeatureVector& raw) const;

 private:
  std::vector<surrogate::Surrogate> members_;
};

struct LabelingConfig {
  int ensemble_size = 5;
  int retrain_every = 25;  // human submissions between ensemble refits; 0 disables
  int min_train_rows = 20;
  std::uint64_t seed = 0;
  surrogate::TrainConfig training = [] {
    surrogate::TrainConfig t;
    t.epochs = 150;
    t.patience = 30;
    return t;
  }();

  void validate() const;
};

struct QueueEntry {
  features::StepResponse response;
  std::string path;
};

struct Progress {
  std::size_t labeled = 0;
  std::size_t pending = 0;
};

/// Queue plus dataset store. All state sits behind one mutex; the dataset file
/// is only ever appended to.
class LabelingService {
 public:
  /// Opens (or creates with a header and `base_rows`) the dataset file. When
  /// the store holds enough rows the acquisition ensemble is trained at once.
  LabelingService(std::string dataset_path, LabelingConfig cfg = {},
                  const std::vector<surrogate::LabeledSample>& base_rows = {});

  /// Appends pending items with their scores. Throws ConflictError on a
  /// duplicate id (nothing is enqueued then). Returns the queue size.
  std::size_t enqueue(const std::vector<QueueEntry>& entries);

  /// Highest-scoring pending item, ties by insertion order.
  std::optional<QueueItem> next_unlabeled() const;

  /// Appends a human row and marks the item labeled. NotFoundError for an
  /// unknown id, ConflictError if it is not pending, PreconditionError for a
  /// grade outside [0, 10].
  surrogate::LabeledSample submit_label(const std::string& id, double grade);

  void skip(const std::string& id);

  /// Header plus every row, as stored.
  std::string export_dataset() const;
  Progress progress() const;
  /// Pending ids in queue order.
  std::vector<std::string> pending_order() const;
  std::vector<QueueItem> items() const;

  /// Replaces the acquisition model and rescores pending items.
  void set_model(AcquisitionModel model);
  int retrain_count() const;
  std::size_t size() const;

 private:
  void append_row(const surrogate::LabeledSample& s);
  void refit_locked();
  void rescore_locked();

  mutable std::mutex mu_;
  std::string path_;
  LabelingConfig cfg_;
  std::vector<QueueItem> items_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<surrogate::LabeledSample> rows_;
  std::unordered_map<std::string, double> human_grades_;
  AcquisitionModel model_;
  std::uint64_t next_order_ = 0;
  int submissions_since_fit_ = 0;
  int retrain_count_ = 0;
};

/// JSON view of an item for GET /queue/next; samples are [t, y1, y2, r1, r2].
nlohmann::json item_to_json(const QueueItem& item);

/// HTTP front end: GET /queue/next, POST /labels, GET /dataset/export, GET /progress.
class LabelingServer {
 public:
  explicit LabelingServer(LabelingService& service);
  ~LabelingServer();
  LabelingServer(const LabelingServer&) = delete;
  LabelingServer& operator=(const LabelingServer&) = delete;

  /// Binds (port 0 picks a free port) and returns the bound port.
  int bind(const std::string& host = "127.0.0.1", int port = 0);
  /// Serves on a background thread.
  void start();
  /// Serves on the calling thread until stop().
  void listen();
  void stop();

 private:
  LabelingService& service_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace mpctune::labeling
