#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "taegcn/data.hpp"
#include "taegcn/model.hpp"

namespace taegcn::train {

using ad::Tensor;

struct TrainConfig {
  double lr = 1e-4;
  double weight_decay = 1e-4;
  std::size_t batch_size = 8;
  std::size_t epochs = 40;
  std::uint64_t seed = 0;
  bool shuffle = true;
  /// Epochs without validation improvement before stopping; 0 disables.
  std::size_t patience = 0;
  /// Global gradient-norm clip; 0 disables.
  double clip_norm = 0.0;
  /// Stop after this many optimizer steps; 0 means no cap.
  std::size_t max_steps = 0;
  /// Worker threads for validation passes.
  std::size_t eval_threads = 1;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_mae = 0.0;
  double seconds = 0.0;
  std::size_t steps = 0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_mae = 0.0;
  std::size_t total_steps = 0;

  /// Loss and validation sequences match exactly (wall-clock is ignored).
  bool same_trajectory(const TrainHistory& other) const;
};

struct HorizonMetrics {
  std::size_t step = 0;  // 1-based horizon step; 0 for the aggregate
  double mae = 0.0;
  double rmse = 0.0;
  double mape = 0.0;  // percent
  std::size_t count = 0;
  std::size_t mape_count = 0;
  bool operator==(const HorizonMetrics&) const = default;
};

struct MetricsReport {
  std::vector<HorizonMetrics> per_horizon;
  HorizonMetrics aggregate;
  std::size_t windows = 0;
  bool operator==(const MetricsReport&) const = default;
};

/// Metrics over predictions/targets [W, N, H] in original units. Entries
/// whose target equals `missing_marker` are skipped; MAPE additionally skips
/// zero targets. Throws ContractError when nothing is left to score.
MetricsReport compute_metrics(const Tensor& prediction, const Tensor& target, double missing_marker);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Shuffled minibatch Adam on masked MAE in original units. Keeps the
/// parameters of the best validation epoch and restores them at the end.
/// Throws DivergenceError on a non-finite loss.
TrainHistory fit(model::Forecaster& forecaster, const data::WindowSet& train_windows,
                 const data::WindowSet& val_windows, const TrainConfig& config,
                 const EpochCallback& on_epoch = nullptr);

/// Predictions for every window, [W, N, H] in original units. Batches run on
/// up to `threads` workers; output is independent of the thread count.
Tensor predict_windows(const model::Forecaster& forecaster, const data::WindowSet& windows,
                       std::size_t threads = 1, std::size_t batch_size = 32);

MetricsReport evaluate(const model::Forecaster& forecaster, const data::WindowSet& windows,
                       std::size_t threads = 1);

/// Repeats the last observed input value for every horizon step.
MetricsReport evaluate_persistence(const data::WindowSet& windows);

/// Thread cap from TAEGCN_THREADS (default 1).
std::size_t threads_from_env();

std::string format_report(const MetricsReport& report, double minutes_per_step = 5.0);

}  // namespace taegcn::train
