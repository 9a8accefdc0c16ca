#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "mpctune/labeling_service.hpp"

namespace mpctune::labeling {

std::string to_string(ItemStatus s) {
  switch (s) {
    case ItemStatus::kPending: return "pending";
    case ItemStatus::kLabeled: return "labeled";
    case ItemStatus::kSkipped: return "skipped";
  }
  return "unknown";
}

AcquisitionModel::AcquisitionModel(std::vector<surrogate::Surrogate> members) : members_(std::move(members)) {
  if (members_.size() < 2) throw PreconditionError("an acquisition ensemble needs at least two members");
}

AcquisitionModel AcquisitionModel::train_bootstrap(const std::vector<surrogate::LabeledSample>& rows, int k,
                                                   std::uint64_t seed, const surrogate::TrainConfig& cfg) {
  if (k < 2) throw PreconditionError("ensemble size must be >= 2");
  if (rows.empty()) throw PreconditionError("cannot fit an ensemble without rows");
  std::vector<surrogate::Surrogate> members;
  for (int m = 0; m < k; ++m) {
    std::mt19937_64 rng(seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(m + 1));
    std::uniform_int_distribution<std::size_t> pick(0, rows.size() - 1);
    surrogate::Dataset ds;
    std::vector<features::FeatureVector> feats;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      ds.samples.push_back(rows[pick(rng)]);
      feats.push_back(ds.samples.back().features);
    }
    ds.split.assign(ds.samples.size(), surrogate::Split::kTrain);
    ds.stats = features::NormStats::fit(feats);
    surrogate::TrainConfig c = cfg;
    c.seed = rng();
    const surrogate::TrainResult tr = surrogate::train(ds, c);
    members.push_back({tr.net, tr.stats});
  }
  return AcquisitionModel(std::move(members));
}

double AcquisitionModel::score(const features::FeatureVector& raw) const {
  if (members_.empty()) return 0.0;
  double mean = 0.0;
  std::vector<double> c;
  for (const auto& m : members_) {
    c.push_back(m.cost(raw));
    mean += c.back();
  }
  mean /= static_cast<double>(c.size());
  double var = 0.0;
  for (double v : c) var += (v - mean) * (v - mean);
  return var / static_cast<double>(c.size());
}

void LabelingConfig::validate() const {
  if (ensemble_size < 2) throw PreconditionError("ensemble size must be >= 2");
  if (retrain_every < 0) throw PreconditionError("retrain cadence must be >= 0");
  if (min_train_rows < 1) throw PreconditionError("min_train_rows must be >= 1");
  training.validate();
}

LabelingService::LabelingService(std::string dataset_path, LabelingConfig cfg,
                                 const std::vector<surrogate::LabeledSample>& base_rows)
    : path_(std::move(dataset_path)), cfg_(std::move(cfg)) {
  cfg_.validate();
  if (std::filesystem::exists(path_)) {
    rows_ = surrogate::load_dataset(path_);
  } else {
    surrogate::save_dataset(base_rows, path_);
    rows_ = base_rows;
  }
  for (const auto& r : rows_)
    if (r.source == surrogate::Source::kHuman) human_grades_[r.trajectory_id] = r.grade;
  if (static_cast<int>(rows_.size()) >= cfg_.min_train_rows)
    model_ = AcquisitionModel::train_bootstrap(rows_, cfg_.ensemble_size, cfg_.seed, cfg_.training);
}

std::size_t LabelingService::enqueue(const std::vector<QueueEntry>& entries) {
  std::lock_guard<std::mutex> lock(mu_);
  std::unordered_set<std::string> fresh;
  std::vector<features::FeatureVector> feats;
  for (const auto& e : entries) {
    if (e.response.id.empty()) throw PreconditionError("trajectory without an id");
    if (index_.count(e.response.id) || !fresh.insert(e.response.id).second)
      throw ConflictError("duplicate trajectory id '" + e.response.id + "'");
    feats.push_back(features::extract_features(e.response));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    QueueItem item;
    item.id = entries[i].response.id;
    item.response_path = entries[i].path;
    item.response = entries[i].response;
    item.features = feats[i];
    item.score = model_.score(item.features);
    item.order = next_order_++;
    const auto human = human_grades_.find(item.id);
    if (human != human_grades_.end()) {
      item.status = ItemStatus::kLabeled;
      item.grade = human->second;
    }
    index_[item.id] = items_.size();
    items_.push_back(std::move(item));
  }
  return items_.size();
}

std::vector<std::string> LabelingService::pending_order() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<const QueueItem*> pending;
  for (const auto& it : items_)
    if (it.status == ItemStatus::kPending) pending.push_back(&it);
  std::sort(pending.begin(), pending.end(), [](const QueueItem* a, const QueueItem* b) {
    if (a->score != b->score) return a->score > b->score;
    return a->order < b->order;
  });
  std::vector<std::string> ids;
  for (const QueueItem* p : pending) ids.push_back(p->id);
  return ids;
}

std::optional<QueueItem> LabelingService::next_unlabeled() const {
  std::lock_guard<std::mutex> lock(mu_);
  const QueueItem* best = nullptr;
  for (const auto& it : items_) {
    if (it.status != ItemStatus::kPending) continue;
    if (!best || it.score > best->score || (it.score == best->score && it.order < best->order)) best = &it;
  }
  if (!best) return std::nullopt;
  return *best;
}

surrogate::LabeledSample LabelingService::submit_label(const std::string& id, double grade) {
  if (!(grade >= 0.0 && grade <= surrogate::kGradeMax))
    throw PreconditionError("grade must lie in [0, 10]");
  std::lock_guard<std::mutex> lock(mu_);
  const auto found = index_.find(id);
  if (found == index_.end()) throw NotFoundError("unknown trajectory id '" + id + "'");
  QueueItem& item = items_[found->second];
  if (item.status != ItemStatus::kPending)
    throw ConflictError("trajectory '" + id + "' is already " + to_string(item.status));

  surrogate::LabeledSample s;
  s.trajectory_id = id;
  s.features = item.features;
  s.grade = grade;
  s.source = surrogate::Source::kHuman;
  append_row(s);
  rows_.push_back(s);
  human_grades_[id] = grade;
  item.status = ItemStatus::kLabeled;
  item.grade = grade;

  ++submissions_since_fit_;
  if (cfg_.retrain_every > 0 && submissions_since_fit_ >= cfg_.retrain_every) {
    submissions_since_fit_ = 0;
    refit_locked();
  }
  return s;
}

void LabelingService::skip(const std::string& id) {
  std::lock_guard<std::mutex> lock(mu_);
  const auto found = index_.find(id);
  if (found == index_.end()) throw NotFoundError("unknown trajectory id '" + id + "'");
  QueueItem& item = items_[found->second];
  if (item.status != ItemStatus::kPending)
    throw ConflictError("trajectory '" + id + "' is already " + to_string(item.status));
  item.status = ItemStatus::kSkipped;
}

std::string LabelingService::export_dataset() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::ifstream is(path_);
  if (!is) throw Error("cannot read " + path_);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Progress LabelingService::progress() const {
  std::lock_guard<std::mutex> lock(mu_);
  Progress p;
  for (const auto& it : items_) {
    if (it.status == ItemStatus::kLabeled) ++p.labeled;
    if (it.status == ItemStatus::kPending) ++p.pending;
  }
  return p;
}

std::vector<QueueItem> LabelingService::items() const {
  std::lock_guard<std::mutex> lock(mu_);
  return items_;
}

void LabelingService::set_model(AcquisitionModel model) {
  std::lock_guard<std::mutex> lock(mu_);
  model_ = std::move(model);
  rescore_locked();
}

int LabelingService::retrain_count() const {
  std::lock_guard<std::mutex> lock(mu_);
  return retrain_count_;
}

std::size_t LabelingService::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return items_.size();
}

void LabelingService::append_row(const surrogate::LabeledSample& s) {
  std::ofstream os(path_, std::ios::app);
  if (!os) throw Error("cannot append to " + path_);
  os << surrogate::sample_to_json(s).dump() << '\n';
  os.flush();
  if (!os) throw Error("append failed: " + path_);
}

void LabelingService::refit_locked() {
  ++retrain_count_;
  if (static_cast<int>(rows_.size()) < cfg_.min_train_rows) return;
  model_ = AcquisitionModel::train_bootstrap(rows_, cfg_.ensemble_size,
                                             cfg_.seed + static_cast<std::uint64_t>(retrain_count_), cfg_.training);
  rescore_locked();
}

void LabelingService::rescore_locked() {
  for (auto& it : items_)
    if (it.status == ItemStatus::kPending) it.score = model_.score(it.features);
}

}  // namespace mpctune::labeling
