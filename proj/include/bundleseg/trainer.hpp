#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bundleseg/preprocess.hpp"
#include "bundleseg/unet.hpp"

namespace bundleseg {

/// Subject-level partition for k-fold cross-validation.
struct FoldPlan {
  std::uint64_t seed = 0;
  int k = 5;
  std::map<std::string, int> assignments;

  std::vector<std::string> members(int fold) const;
  std::vector<std::string> complement(int fold) const;

  void save(const std::filesystem::path& json_path) const;
  static FoldPlan load(const std::filesystem::path& json_path);
  bool operator==(const FoldPlan&) const = default;
};

/// Sorts the ids, shuffles them with a seeded Fisher-Yates pass and deals them
/// round-robin into k folds.
FoldPlan make_folds(std::vector<std::string> subject_ids, int k, std::uint64_t seed);

struct TrainHyper {
  double learning_rate = 1e-3;
  int max_epochs = 250;
  int patience = 25;
  int batch_size = 32;
  double min_improvement = 1e-6;  // training loss must drop by at least this
  double threshold = 0.5;
  std::uint64_t shuffle_seed = 0;
};

struct TrainRecord {
  std::vector<double> train_loss;
  std::vector<std::optional<double>> val_dice;
  int best_epoch = 0;  // 1-based; 0 if validation Dice was never defined
  int stopped_epoch = 0;
  std::optional<double> best_val_dice;
};

/// Training-loss patience counter. Epochs are 1-based.
class EarlyStopping {
 public:
  EarlyStopping(int patience, double min_improvement) : patience_(patience), min_delta_(min_improvement) {}

  /// Records the loss of `epoch`; returns true when training should stop.
  bool update(int epoch, double loss);
  int last_improvement_epoch() const { return last_improvement_; }

 private:
  int patience_;
  double min_delta_;
  double best_ = 0.0;
  int last_improvement_ = 0;
  bool has_best_ = false;
};

struct TrainCallbacks {
  std::function<void(int epoch, double loss, std::optional<double> val_dice)> on_epoch;
  std::function<void(const ModelWeights&, int epoch, double val_dice)> on_checkpoint;
};

struct TrainResult {
  ModelWeights best_weights;
  TrainRecord record;
};

/// Trains on the training-eligible slices of `train`, evaluates mean 3-D
/// validation Dice on `val` after every epoch and keeps the weights of the
/// best epoch. Stops after `patience` epochs without a training-loss
/// improvement or at max_epochs.
TrainResult train_fold(const std::vector<const SubjectRecord*>& train,
                       const std::vector<const SubjectRecord*>& val, const UNetConfig& config,
                       const TrainHyper& hyper, const TrainCallbacks& callbacks = {});

/// Runs every axial slice through the model (eval mode), thresholds at
/// `threshold` (inclusive) and restacks into a binary mask set on the
/// subject's grid. Voxels outside the subject's brain mask (when it has one)
/// are set to 0. Channel names come from `channel_names`.
BundleMaskSet infer_subject(UNet& model, const SubjectRecord& subject,
                            const std::vector<std::string>& channel_names, int batch_size = 16,
                            double threshold = 0.5);

/// Mean Dice over (subject, valid bundle) pairs with a defined value.
std::optional<double> mean_dice(const std::vector<const SubjectRecord*>& subjects,
                                const std::vector<BundleMaskSet>& predictions);

struct CrossValidationOptions {
  int k = 5;
  std::uint64_t seed = 0;
  /// When set: folds.json, fold_<f>/checkpoint.bseg, fold_<f>/train_log.csv and
  /// fold_<f>/record.json are written here, and finished folds are reloaded.
  std::optional<std::filesystem::path> output_dir;
  std::function<void(const std::string&)> log;
};

struct CrossValidationResult {
  FoldPlan plan;
  std::map<std::string, BundleMaskSet> predictions;
  std::vector<TrainRecord> records;
  std::vector<std::vector<std::string>> training_subjects;  // per fold
  std::map<std::string, int> predicted_by_fold;
};

CrossValidationResult run_cross_validation(const std::vector<SubjectRecord>& subjects,
                                           const UNetConfig& config, const TrainHyper& hyper,
                                           const CrossValidationOptions& options);

void write_train_log(const std::filesystem::path& path, const TrainRecord& record);

}  // namespace bundleseg
