#include "imedbot/grid_search.hpp"

#include <atomic>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#include "imedbot/rng.hpp"

namespace imedbot::search {

namespace {

template <typename T>
void require_nonempty(const std::vector<T>& v, const char* field) {
  if (v.empty()) {
    throw GridError("EmptyCandidateList",
                    std::string(field) + ": candidate list is empty");
  }
}

std::vector<std::size_t> other_folds(const data::SplitPlan& plan, std::size_t fold) {
  std::vector<std::size_t> rows;
  for (std::size_t k = 0; k < data::kFoldCount; ++k) {
    if (k == fold) continue;
    rows.insert(rows.end(), plan.folds[k].begin(), plan.folds[k].end());
  }
  return rows;
}

}  // namespace

GridTooLarge::GridTooLarge(std::size_t count, std::size_t cap)
    : GridError("GridTooLarge",
                "grid has " +
                    (count == std::numeric_limits<std::size_t>::max()
                         ? std::string("more than 2^64")
                         : std::to_string(count)) +
                    " settings, the limit is " + std::to_string(cap)),
      count_(count),
      cap_(cap) {}

NonFiniteSetting::NonFiniteSetting(std::size_t setting_index,
                                   const nn::NonFiniteLoss& cause)
    : GridError("NonFiniteLoss", "setting " + std::to_string(setting_index) + ": " +
                                     cause.what()),
      setting_index_(setting_index) {}

GridSpec GridSpec::singleton(const nn::HyperparameterSetting& s) {
  return GridSpec{{s.hidden_layer_count}, {s.hidden_units},  {s.hidden_activation},
                  {s.learning_rate},      {s.lr_decay},      {s.epochs},
                  {s.batch_size},         {s.optimizer},     {s.momentum},
                  {s.dropout_rate},       {s.l2_lambda},     {s.weight_init},
                  {s.early_stop_patience}};
}

nn::HyperparameterSetting default_setting() {
  nn::HyperparameterSetting s;
  s.hidden_layer_count = 2;
  s.hidden_units = 16;
  s.hidden_activation = nn::Activation::kRelu;
  s.learning_rate = 0.01;
  s.lr_decay = 0.0;
  s.epochs = 50;
  s.batch_size = 32;
  s.optimizer = nn::Optimizer::kAdam;
  s.momentum = 0.9;
  s.dropout_rate = 0.0;
  s.l2_lambda = 1e-4;
  s.weight_init = nn::WeightInit::kHeUniform;
  s.early_stop_patience = 0;
  return s;
}

GridSpec default_grid() {
  GridSpec g = GridSpec::singleton(default_setting());
  g.learning_rate = {0.001, 0.01, 0.1};
  g.epochs = {50, 100};
  g.batch_size = {16, 32};
  return g;
}

std::size_t setting_count(const GridSpec& g) noexcept {
  const std::size_t sizes[] = {
      g.hidden_layer_count.size(), g.hidden_units.size(), g.hidden_activation.size(),
      g.learning_rate.size(),      g.lr_decay.size(),     g.epochs.size(),
      g.batch_size.size(),         g.optimizer.size(),    g.momentum.size(),
      g.dropout_rate.size(),       g.l2_lambda.size(),    g.weight_init.size(),
      g.early_stop_patience.size()};
  std::size_t count = 1;
  for (const std::size_t n : sizes) {
    if (n == 0) return 0;
    if (count > std::numeric_limits<std::size_t>::max() / n) {
      return std::numeric_limits<std::size_t>::max();
    }
    count *= n;
  }
  return count;
}

void validate(const GridSpec& g) {
  require_nonempty(g.hidden_layer_count, "hidden_layer_count");
  require_nonempty(g.hidden_units, "hidden_units");
  require_nonempty(g.hidden_activation, "hidden_activation");
  require_nonempty(g.learning_rate, "learning_rate");
  require_nonempty(g.lr_decay, "lr_decay");
  require_nonempty(g.epochs, "epochs");
  require_nonempty(g.batch_size, "batch_size");
  require_nonempty(g.optimizer, "optimizer");
  require_nonempty(g.momentum, "momentum");
  require_nonempty(g.dropout_rate, "dropout_rate");
  require_nonempty(g.l2_lambda, "l2_lambda");
  require_nonempty(g.weight_init, "weight_init");
  require_nonempty(g.early_stop_patience, "early_stop_patience");

  // Each candidate is checked in isolation against an otherwise valid setting.
  const auto base = default_setting();
  auto check = [&](auto&& assign) {
    auto s = base;
    assign(s);
    nn::validate(s);
  };
  for (int v : g.hidden_layer_count) check([&](auto& s) { s.hidden_layer_count = v; });
  for (int v : g.hidden_units) check([&](auto& s) { s.hidden_units = v; });
  for (double v : g.learning_rate) check([&](auto& s) { s.learning_rate = v; });
  for (double v : g.lr_decay) check([&](auto& s) { s.lr_decay = v; });
  for (int v : g.epochs) check([&](auto& s) { s.epochs = v; });
  for (int v : g.batch_size) check([&](auto& s) { s.batch_size = v; });
  for (double v : g.momentum) check([&](auto& s) { s.momentum = v; });
  for (double v : g.dropout_rate) check([&](auto& s) { s.dropout_rate = v; });
  for (double v : g.l2_lambda) check([&](auto& s) { s.l2_lambda = v; });
  for (int v : g.early_stop_patience) check([&](auto& s) { s.early_stop_patience = v; });
}

std::vector<nn::HyperparameterSetting> enumerate_settings(const GridSpec& g,
                                                          std::size_t cap) {
  validate(g);
  const std::size_t total = setting_count(g);
  if (total > cap) throw GridTooLarge(total, cap);

  std::vector<nn::HyperparameterSetting> out;
  out.reserve(total);
  for (const int a : g.hidden_layer_count)
  for (const int b : g.hidden_units)
  for (const auto c : g.hidden_activation)
  for (const double d : g.learning_rate)
  for (const double e : g.lr_decay)
  for (const int f : g.epochs)
  for (const int h : g.batch_size)
  for (const auto i : g.optimizer)
  for (const double j : g.momentum)
  for (const double k : g.dropout_rate)
  for (const double l : g.l2_lambda)
  for (const auto m : g.weight_init)
  for (const int n : g.early_stop_patience)
    out.push_back({a, b, c, d, e, f, h, i, j, k, l, m, n});
  return out;
}

std::uint64_t fold_seed(std::uint64_t master_seed, std::size_t setting_index,
                        std::size_t fold) noexcept {
  return mix_seed(master_seed, setting_index, fold);
}

nn::NetworkWeights train_fold(const data::EncodedMatrix& m, const data::SplitPlan& plan,
                              const nn::HyperparameterSetting& s,
                              std::size_t setting_index, std::size_t fold,
                              std::uint64_t master_seed) {
  const auto train_rows = other_folds(plan, fold);
  const auto train_m = data::select_rows(m, train_rows);
  const nn::TrainConfig cfg{s, fold_seed(master_seed, setting_index, fold), m.cols};
  if (s.early_stop_patience > 0) {
    const auto held = data::select_rows(m, plan.folds[fold]);
    return nn::train(train_m, cfg, &held);
  }
  return nn::train(train_m, cfg);
}

FoldOutcome evaluate_fold(const data::EncodedMatrix& m, const data::SplitPlan& plan,
                          const nn::HyperparameterSetting& s,
                          std::size_t setting_index, std::size_t fold,
                          std::uint64_t master_seed) {
  const auto w = train_fold(m, plan, s, setting_index, fold, master_seed);
  const auto held = data::select_rows(m, plan.folds[fold]);
  const auto scores = nn::predict(w, s.hidden_activation, held);
  try {
    return {metrics::roc_curve(scores, held.labels).auc, false};
  } catch (const metrics::MetricsError& e) {
    if (e.kind() != metrics::MetricsError::Kind::kSingleClass) throw;
    return {0.5, true};
  }
}

CrossValidation cross_validate(const data::EncodedMatrix& m, const data::SplitPlan& plan,
                               const nn::HyperparameterSetting& s,
                               std::size_t setting_index, std::uint64_t master_seed) {
  CrossValidation cv;
  double sum = 0.0;
  for (std::size_t k = 0; k < data::kFoldCount; ++k) {
    cv.folds[k] = evaluate_fold(m, plan, s, setting_index, k, master_seed);
    sum += cv.folds[k].auc;
  }
  cv.mean_auc = sum / static_cast<double>(data::kFoldCount);
  return cv;
}

GridReport run_grid_search(const data::Dataset& d, const GridSpec& g,
                           std::uint64_t master_seed, const SearchOptions& options) {
  const auto settings = enumerate_settings(g, options.cap);
  const auto plan = data::make_split(d, master_seed);
  const auto m = data::encode(d);

  const std::size_t total = settings.size();
  const std::size_t tasks = total * data::kFoldCount;
  std::vector<FoldOutcome> outcomes(tasks);
  std::vector<std::exception_ptr> failures(tasks);
  std::vector<std::atomic<std::size_t>> folds_done(total);
  std::atomic<std::size_t> next_task{0};
  std::atomic<std::size_t> settings_done{0};
  std::mutex progress_mutex;

  auto worker = [&] {
    for (std::size_t t = next_task.fetch_add(1); t < tasks; t = next_task.fetch_add(1)) {
      const std::size_t si = t / data::kFoldCount;
      const std::size_t fold = t % data::kFoldCount;
      try {
        outcomes[t] = evaluate_fold(m, plan, settings[si], si, fold, master_seed);
      } catch (...) {
        failures[t] = std::current_exception();
      }
      if (folds_done[si].fetch_add(1) + 1 == data::kFoldCount) {
        const std::size_t done = settings_done.fetch_add(1) + 1;
        if (options.on_progress) {
          std::lock_guard lock(progress_mutex);
          options.on_progress(done, total);
        }
      }
    }
  };

  const std::size_t n_workers = std::max<std::size_t>(1, std::min(options.workers, tasks));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
  }

  // Report the failure of the lowest task index, whatever the schedule was.
  for (std::size_t t = 0; t < tasks; ++t) {
    if (!failures[t]) continue;
    try {
      std::rethrow_exception(failures[t]);
    } catch (const nn::NonFiniteLoss& e) {
      throw NonFiniteSetting(t / data::kFoldCount, e);
    }
  }

  GridReport report;
  report.encoder = m.encoder;
  for (std::size_t si = 0; si < total; ++si) {
    double sum = 0.0;
    for (std::size_t k = 0; k < data::kFoldCount; ++k) {
      const auto& o = outcomes[si * data::kFoldCount + k];
      sum += o.auc;
      if (o.single_class) {
        report.warnings.push_back("setting " + std::to_string(si) + ", fold " +
                                  std::to_string(k) +
                                  ": held-out fold has a single class, AUC taken as 0.5");
      }
    }
    const double mean = sum / static_cast<double>(data::kFoldCount);
    report.per_setting_results.push_back({si, mean});
    if (si == 0 || mean > report.best_cv_auc) {
      report.best_cv_auc = mean;
      report.best_index = si;
    }
  }
  report.best_setting = settings[report.best_index];

  const auto train_m = data::select_rows(m, plan.train);
  const auto valid_m = data::select_rows(m, plan.validation);
  const nn::TrainConfig cfg{report.best_setting,
                            fold_seed(master_seed, report.best_index, kFinalModelFold),
                            m.cols};
  try {
    report.weights = report.best_setting.early_stop_patience > 0
                         ? nn::train(train_m, cfg, &valid_m)
                         : nn::train(train_m, cfg);
  } catch (const nn::NonFiniteLoss& e) {
    throw NonFiniteSetting(report.best_index, e);
  }
  const auto scores = nn::predict(report.weights, report.best_setting.hidden_activation,
                                  valid_m);
  report.validation_roc = metrics::roc_curve(scores, valid_m.labels);
  report.validation_auc = report.validation_roc.auc;
  return report;
}

}  // namespace imedbot::search
