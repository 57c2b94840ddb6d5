#pragma once

// JSON forms of the model, training and run configuration. Parsing rejects
// unknown keys; serialization always writes every field.

#include <filesystem>
#include <string>

#include <json.hpp>

#include "taegcn/model.hpp"
#include "taegcn/train.hpp"

namespace taegcn::config {

using nlohmann::json;

struct DataConfig {
  std::string path;
  double missing_marker = 0.0;
  double train_fraction = 0.7;
  double val_fraction = 0.1;
  double test_fraction = 0.2;
  bool operator==(const DataConfig&) const = default;
};

struct OutputConfig {
  std::string dir = "run";
  bool operator==(const OutputConfig&) const = default;
};

struct RunConfig {
  DataConfig data;
  model::ModelConfig model;
  model::Variant variant = model::Variant::kFull;
  train::TrainConfig train;
  OutputConfig output;
};

json to_json(const model::ModelConfig& c);
model::ModelConfig model_config_from_json(const json& j);

json to_json(const train::TrainConfig& c);
train::TrainConfig train_config_from_json(const json& j);

json to_json(const RunConfig& c);
/// Missing blocks and keys take their defaults. Relative data paths are
/// resolved against `base_dir`.
RunConfig run_config_from_json(const json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

json to_json(const train::MetricsReport& r);
json to_json(const train::TrainHistory& h);

}  // namespace taegcn::config
