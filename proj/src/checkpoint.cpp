#include "taegcn/checkpoint.hpp"

#include "taegcn/error.hpp"
#include "taegcn/io.hpp"

namespace taegcn::checkpoint {

using nlohmann::json;

namespace {

json tensor_json(const ad::Tensor& t) {
  return json{{"shape", t.shape()}, {"values", std::vector<double>(t.values().begin(), t.values().end())}};
}

ad::Tensor tensor_from(const json& j, const std::string& what) {
  try {
    auto shape = j.at("shape").get<ad::Shape>();
    auto values = j.at("values").get<std::vector<double>>();
    return ad::Tensor::from(std::move(shape), std::move(values));
  } catch (const json::exception& e) {
    throw ParseError("checkpoint: malformed tensor '" + what + "': " + e.what());
  } catch (const DimensionError& e) {
    throw ParseError("checkpoint: tensor '" + what + "': " + e.what());
  }
}

}  // namespace

json to_json(const model::Forecaster& f, const config::DataConfig* data) {
  json params = json::object();
  for (const auto& [name, t] : f.model.parameters().items()) params[name] = tensor_json(t);
  json doc{{"format_version", kFormatVersion},
           {"variant", model::to_string(f.model.variant())},
           {"config", config::to_json(f.model.config())},
           {"parameters", params},
           {"buffers", {{"static_features", tensor_json(f.static_features)}}},
           {"normalization", {{"mean", f.norm.mean}, {"std", f.norm.std}}},
           {"node_ids", f.node_ids},
           {"missing_marker", f.missing_marker}};
  if (data) {
    doc["data"] = {{"path", data->path},
                   {"missing_marker", data->missing_marker},
                   {"train_fraction", data->train_fraction},
                   {"val_fraction", data->val_fraction},
                   {"test_fraction", data->test_fraction}};
  }
  return doc;
}

model::Forecaster from_json(const json& j, config::DataConfig* data) {
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kFormatVersion) {
      throw ParseError("checkpoint: unsupported format_version " + std::to_string(version));
    }
    const model::ModelConfig cfg = config::model_config_from_json(j.at("config"));
    const model::Variant variant = model::parse_variant(j.at("variant").get<std::string>());
    model::Forecaster f{model::TaegcnModel(cfg, variant), {}, {}, {}, 0.0};
    const json& params = j.at("parameters");
    std::map<std::string, std::vector<double>> values;
    for (const auto& [name, t] : f.model.parameters().items()) {
      if (!params.contains(name)) throw ParseError("checkpoint: missing parameter '" + name + "'");
      const ad::Tensor loaded = tensor_from(params.at(name), name);
      if (loaded.shape() != t.shape()) {
        throw ParseError("checkpoint: parameter '" + name + "' has shape " + ad::to_string(loaded.shape()) +
                         ", expected " + ad::to_string(t.shape()));
      }
      values.emplace(name, std::vector<double>(loaded.values().begin(), loaded.values().end()));
    }
    if (params.size() != values.size()) throw ParseError("checkpoint: unexpected extra parameters");
    f.model.parameters().restore(values);
    f.static_features = tensor_from(j.at("buffers").at("static_features"), "static_features");
    f.norm.mean = j.at("normalization").at("mean").get<std::vector<double>>();
    f.norm.std = j.at("normalization").at("std").get<std::vector<double>>();
    f.node_ids = j.at("node_ids").get<std::vector<std::string>>();
    f.missing_marker = j.at("missing_marker").get<double>();
    if (f.static_features.rank() != 2 || f.static_features.size(0) != f.node_ids.size()) {
      throw ParseError("checkpoint: static features do not match node ids");
    }
    if (data && j.contains("data")) {
      const json& d = j.at("data");
      data->path = d.value("path", std::string());
      data->missing_marker = d.value("missing_marker", 0.0);
      data->train_fraction = d.value("train_fraction", 0.7);
      data->val_fraction = d.value("val_fraction", 0.1);
      data->test_fraction = d.value("test_fraction", 0.2);
    }
    return f;
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
}

void save(const std::filesystem::path& path, const model::Forecaster& f, const config::DataConfig* data) {
  io::write_file_atomic(path, to_json(f, data).dump() + "\n");
}

model::Forecaster load(const std::filesystem::path& path, config::DataConfig* data) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError("checkpoint '" + path.string() + "': " + e.what());
  }
  return from_json(j, data);
}

}  // namespace taegcn::checkpoint
