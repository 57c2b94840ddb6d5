#include "taegcn/config.hpp"

#include <set>

#include "taegcn/error.hpp"
#include "taegcn/io.hpp"

namespace taegcn::config {

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& block) {
  if (!obj.is_object()) throw ConfigError("config block '" + block + "' must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in config block '" + block + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& field, const std::string& block) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config block '" + block + "': key '" + key + "' has the wrong type");
  }
}

}  // namespace

json to_json(const model::ModelConfig& c) {
  return json{{"layers", c.layers},
              {"windows", c.windows},
              {"window_mode", model::to_string(c.window_mode)},
              {"heads", c.heads},
              {"hidden", c.hidden},
              {"state_dim", c.state_dim},
              {"period", c.period},
              {"input_length", c.input_length},
              {"horizon", c.horizon},
              {"skip", c.skip},
              {"head_hidden", c.head_hidden},
              {"target_channel", c.target_channel},
              {"input_channels", c.input_channels},
              {"seed", c.seed}};
}

model::ModelConfig model_config_from_json(const json& j) {
  static const std::set<std::string> keys{"layers", "windows", "window_mode", "heads", "hidden",
                                          "state_dim", "period", "input_length", "horizon", "skip",
                                          "head_hidden", "target_channel", "input_channels", "seed"};
  reject_unknown(j, keys, "model");
  model::ModelConfig c;
  read(j, "layers", c.layers, "model");
  read(j, "windows", c.windows, "model");
  std::string mode = model::to_string(c.window_mode);
  read(j, "window_mode", mode, "model");
  c.window_mode = model::parse_window_mode(mode);
  read(j, "heads", c.heads, "model");
  read(j, "hidden", c.hidden, "model");
  read(j, "state_dim", c.state_dim, "model");
  read(j, "period", c.period, "model");
  read(j, "input_length", c.input_length, "model");
  read(j, "horizon", c.horizon, "model");
  read(j, "skip", c.skip, "model");
  read(j, "head_hidden", c.head_hidden, "model");
  read(j, "target_channel", c.target_channel, "model");
  read(j, "input_channels", c.input_channels, "model");
  read(j, "seed", c.seed, "model");
  return c;
}

json to_json(const train::TrainConfig& c) {
  return json{{"lr", c.lr},
              {"weight_decay", c.weight_decay},
              {"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"seed", c.seed},
              {"shuffle", c.shuffle},
              {"patience", c.patience},
              {"clip_norm", c.clip_norm},
              {"max_steps", c.max_steps},
              {"eval_threads", c.eval_threads}};
}

train::TrainConfig train_config_from_json(const json& j) {
  static const std::set<std::string> keys{"lr", "weight_decay", "batch_size", "epochs", "seed",
                                          "shuffle", "patience", "clip_norm", "max_steps", "eval_threads"};
  reject_unknown(j, keys, "train");
  train::TrainConfig c;
  read(j, "lr", c.lr, "train");
  read(j, "weight_decay", c.weight_decay, "train");
  read(j, "batch_size", c.batch_size, "train");
  read(j, "epochs", c.epochs, "train");
  read(j, "seed", c.seed, "train");
  read(j, "shuffle", c.shuffle, "train");
  read(j, "patience", c.patience, "train");
  read(j, "clip_norm", c.clip_norm, "train");
  read(j, "max_steps", c.max_steps, "train");
  read(j, "eval_threads", c.eval_threads, "train");
  return c;
}

json to_json(const RunConfig& c) {
  json model = to_json(c.model);
  model["variant"] = model::to_string(c.variant);
  return json{{"data",
               {{"path", c.data.path},
                {"missing_marker", c.data.missing_marker},
                {"train_fraction", c.data.train_fraction},
                {"val_fraction", c.data.val_fraction},
                {"test_fraction", c.data.test_fraction}}},
              {"model", model},
              {"train", to_json(c.train)},
              {"output", {{"dir", c.output.dir}}}};
}

RunConfig run_config_from_json(const json& j, const std::filesystem::path& base_dir) {
  reject_unknown(j, {"data", "model", "train", "output"}, "root");
  RunConfig c;
  if (j.contains("data")) {
    const json& d = j.at("data");
    reject_unknown(d, {"path", "missing_marker", "train_fraction", "val_fraction", "test_fraction"}, "data");
    read(d, "path", c.data.path, "data");
    read(d, "missing_marker", c.data.missing_marker, "data");
    read(d, "train_fraction", c.data.train_fraction, "data");
    read(d, "val_fraction", c.data.val_fraction, "data");
    read(d, "test_fraction", c.data.test_fraction, "data");
  }
  if (c.data.path.empty()) throw ConfigError("config block 'data': 'path' is required");
  if (!base_dir.empty() && std::filesystem::path(c.data.path).is_relative()) {
    c.data.path = (base_dir / c.data.path).lexically_normal().string();
  }
  if (j.contains("model")) {
    json m = j.at("model");
    if (m.is_object() && m.contains("variant")) {
      std::string v;
      read(m, "variant", v, "model");
      c.variant = model::parse_variant(v);
      m.erase("variant");
    }
    c.model = model_config_from_json(m);
  }
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
  if (j.contains("output")) {
    const json& o = j.at("output");
    reject_unknown(o, {"dir"}, "output");
    read(o, "dir", c.output.dir, "output");
  }
  if (!base_dir.empty() && std::filesystem::path(c.output.dir).is_relative()) {
    c.output.dir = (base_dir / c.output.dir).lexically_normal().string();
  }
  c.train.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file '" + path.string() + "' does not exist");
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path.string() + "': " + e.what());
  }
  try {
    return run_config_from_json(j, std::filesystem::absolute(path).parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

namespace {

json metrics_json(const train::HorizonMetrics& m) {
  return json{{"step", m.step}, {"mae", m.mae}, {"rmse", m.rmse}, {"mape", m.mape},
              {"count", m.count}, {"mape_count", m.mape_count}};
}

}  // namespace

json to_json(const train::MetricsReport& r) {
  json per = json::array();
  for (const auto& m : r.per_horizon) per.push_back(metrics_json(m));
  return json{{"windows", r.windows}, {"per_horizon", per}, {"aggregate", metrics_json(r.aggregate)}};
}

json to_json(const train::TrainHistory& h) {
  json epochs = json::array();
  for (const auto& e : h.epochs) {
    epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_mae", e.val_mae},
                      {"seconds", e.seconds}, {"steps", e.steps}});
  }
  return json{{"epochs", epochs}, {"best_epoch", h.best_epoch}, {"best_val_mae", h.best_val_mae},
              {"total_steps", h.total_steps}};
}

}  // namespace taegcn::config
