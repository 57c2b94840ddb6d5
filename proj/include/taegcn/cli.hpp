#pragma once

// Command-line front end. Exit codes: 0 success, 1 usage error, 2 data or
// configuration error, 3 numerical divergence or failed gradient check.

#include <iosfwd>
#include <string>
#include <vector>

#include "taegcn/config.hpp"
#include "taegcn/data.hpp"
#include "taegcn/model.hpp"
#include "taegcn/train.hpp"

namespace taegcn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

struct Experiment {
  model::Forecaster forecaster;
  train::TrainHistory history;
  train::MetricsReport test;
  train::MetricsReport persistence;
};

/// Windows of one split, normalized with the forecaster's statistics.
data::WindowSet windows_for(const model::Forecaster& f, const data::SeriesDataset& part);

/// Load, split, fit on train, select on val, score on test.
Experiment run_experiment(const config::RunConfig& cfg, const train::EpochCallback& on_epoch = nullptr);

/// Dispatch `args` (without the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace taegcn::cli
