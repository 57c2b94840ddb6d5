#pragma once

// Checkpoint document:
//
//   {
//     "format_version": 1,
//     "variant": "full",
//     "config": { ...model config... },
//     "parameters": { "<path>": {"shape": [...], "values": [...]}, ... },
//     "buffers": { "static_features": {"shape": [...], "values": [...]} },
//     "normalization": {"mean": [...], "std": [...]},
//     "node_ids": [...],
//     "missing_marker": 0,
//     "data": { split fractions }        // optional
//   }
//
// Doubles are written in shortest round-trip form, so save -> load is exact.

#include <filesystem>
#include <string>

#include <json.hpp>

#include "taegcn/config.hpp"
#include "taegcn/model.hpp"

namespace taegcn::checkpoint {

inline constexpr int kFormatVersion = 1;

nlohmann::json to_json(const model::Forecaster& forecaster,
                       const config::DataConfig* data = nullptr);
model::Forecaster from_json(const nlohmann::json& j, config::DataConfig* data = nullptr);

void save(const std::filesystem::path& path, const model::Forecaster& forecaster,
          const config::DataConfig* data = nullptr);
model::Forecaster load(const std::filesystem::path& path, config::DataConfig* data = nullptr);

}  // namespace taegcn::checkpoint
