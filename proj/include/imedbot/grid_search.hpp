#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "imedbot/dataset.hpp"
#include "imedbot/dfnn.hpp"
#include "imedbot/error.hpp"
#include "imedbot/metrics.hpp"

namespace imedbot::search {

// Candidate values per hyperparameter, in HyperparameterSetting field order.
struct GridSpec {
  std::vector<int> hidden_layer_count;
  std::vector<int> hidden_units;
  std::vector<nn::Activation> hidden_activation;
  std::vector<double> learning_rate;
  std::vector<double> lr_decay;
  std::vector<int> epochs;
  std::vector<int> batch_size;
  std::vector<nn::Optimizer> optimizer;
  std::vector<double> momentum;
  std::vector<double> dropout_rate;
  std::vector<double> l2_lambda;
  std::vector<nn::WeightInit> weight_init;
  std::vector<int> early_stop_patience;

  // Every list holds exactly the matching field of `s`.
  static GridSpec singleton(const nn::HyperparameterSetting& s);

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

// Base values used for any hyperparameter a grid leaves out.
nn::HyperparameterSetting default_setting();

// default_setting() with learning_rate {0.001, 0.01, 0.1}, batch_size {16, 32}
// and epochs {50, 100}: 12 settings.
GridSpec default_grid();

inline constexpr std::size_t kDefaultGridCap = 4096;

class GridError : public Error {
 public:
  using Error::Error;
};

class GridTooLarge : public GridError {
 public:
  GridTooLarge(std::size_t count, std::size_t cap);
  // Saturates at SIZE_MAX when the true product overflows.
  std::size_t count() const noexcept { return count_; }
  std::size_t cap() const noexcept { return cap_; }

 private:
  std::size_t count_;
  std::size_t cap_;
};

// Number of settings in the cartesian product (saturating).
std::size_t setting_count(const GridSpec& g) noexcept;

// Checks list non-emptiness and per-value validity; throws InvalidSetting or
// GridError("EmptyCandidateList").
void validate(const GridSpec& g);

// Cartesian product in mixed-radix order: the last field
// (early_stop_patience) varies fastest.
std::vector<nn::HyperparameterSetting> enumerate_settings(
    const GridSpec& g, std::size_t cap = kDefaultGridCap);

// Seed for training fold `fold` of setting `setting_index`. The final
// retrain of the chosen setting uses fold index kFinalModelFold.
std::uint64_t fold_seed(std::uint64_t master_seed, std::size_t setting_index,
                        std::size_t fold) noexcept;
inline constexpr std::size_t kFinalModelFold = data::kFoldCount;

struct FoldOutcome {
  double auc = 0.5;
  bool single_class = false;  // scored fold had one class; auc forced to 0.5
};

// Trains on every fold except `fold` and returns the weights. When early
// stopping is on, the held-out fold is the stopping monitor.
nn::NetworkWeights train_fold(const data::EncodedMatrix& m, const data::SplitPlan& plan,
                              const nn::HyperparameterSetting& s,
                              std::size_t setting_index, std::size_t fold,
                              std::uint64_t master_seed);

FoldOutcome evaluate_fold(const data::EncodedMatrix& m, const data::SplitPlan& plan,
                          const nn::HyperparameterSetting& s,
                          std::size_t setting_index, std::size_t fold,
                          std::uint64_t master_seed);

struct CrossValidation {
  double mean_auc = 0.0;
  std::array<FoldOutcome, data::kFoldCount> folds;
};

CrossValidation cross_validate(const data::EncodedMatrix& m, const data::SplitPlan& plan,
                               const nn::HyperparameterSetting& s,
                               std::size_t setting_index, std::uint64_t master_seed);

struct SettingResult {
  std::size_t index = 0;
  double mean_cv_auc = 0.0;

  friend bool operator==(const SettingResult&, const SettingResult&) = default;
};

struct GridReport {
  std::size_t best_index = 0;
  nn::HyperparameterSetting best_setting;
  double best_cv_auc = 0.0;
  double validation_auc = 0.0;
  metrics::RocResult validation_roc;
  std::vector<SettingResult> per_setting_results;
  nn::NetworkWeights weights;
  data::FeatureEncoder encoder;
  std::vector<std::string> warnings;

  friend bool operator==(const GridReport&, const GridReport&) = default;
};

struct SearchOptions {
  std::size_t workers = 1;
  std::size_t cap = kDefaultGridCap;
  // Called with (settings finished, total) from worker threads.
  std::function<void(std::size_t, std::size_t)> on_progress;
};

class NonFiniteSetting : public GridError {
 public:
  NonFiniteSetting(std::size_t setting_index, const nn::NonFiniteLoss& cause);
  std::size_t setting_index() const noexcept { return setting_index_; }

 private:
  std::size_t setting_index_;
};

GridReport run_grid_search(const data::Dataset& d, const GridSpec& g,
                           std::uint64_t master_seed, const SearchOptions& options = {});

}  // namespace imedbot::search
